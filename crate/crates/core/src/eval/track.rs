//! Sliding-window direction tracking over long recordings.

use serde::{Deserialize, Serialize};

use super::metrics::angular_error;
use crate::ambisonics::FoaSignal;
use crate::dsp::stft;
use crate::error::{Error, Result};
use crate::music::{music_from_spectrogram, MusicConfig};
use crate::nn::{predict_window, Network};
use crate::sphere::{Direction, SphereGrid};

/// What produces the per-window estimates.
pub enum Tracker<'a> {
    Network(&'a Network),
    Music { grid: &'a SphereGrid, config: &'a MusicConfig },
}

/// Frames per analysis window.
pub const WINDOW_FRAMES: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub timestamps: Vec<f64>,
    pub predictions: Vec<Direction>,
    pub errors: Vec<f64>,
}

impl TrackResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,azimuth_deg,elevation_deg,error_deg\n");
        for ((t, p), e) in self.timestamps.iter().zip(&self.predictions).zip(&self.errors) {
            let (a, el) = p.degrees();
            s.push_str(&format!("{t:.4},{a:.4},{el:.4},{e:.4}\n"));
        }
        s
    }

    /// Line chart of the error over time.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, pad) = (640.0, 320.0, 40.0);
        let t_max = self.timestamps.last().copied().unwrap_or(1.0).max(1e-9);
        let e_max = self.errors.iter().cloned().fold(10.0, f64::max);
        let x = |t: f64| pad + (w - 2.0 * pad) * t / t_max;
        let y = |e: f64| h - pad - (h - 2.0 * pad) * e / e_max;
        let points: Vec<String> = self
            .timestamps
            .iter()
            .zip(&self.errors)
            .map(|(t, e)| format!("{:.2},{:.2}", x(*t), y(*e)))
            .collect();
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n",
                "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
                "<text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
                "<line x1=\"{pad}\" y1=\"{yb}\" x2=\"{xr}\" y2=\"{yb}\" stroke=\"black\"/>\n",
                "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{yb}\" stroke=\"black\"/>\n",
                "<text x=\"{xr}\" y=\"{yl}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{t_max:.2} s</text>\n",
                "<text x=\"4\" y=\"{pad}\" font-family=\"sans-serif\" font-size=\"11\">{e_max:.0}°</text>\n",
                "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{pts}\"/>\n",
                "</svg>\n"
            ),
            w = w,
            h = h,
            pad = pad,
            title = title,
            yb = h - pad,
            xr = w - pad,
            yl = h - pad + 16.0,
            t_max = t_max,
            e_max = e_max,
            pts = points.join(" ")
        )
    }
}

/// Slides a 25-frame window by `hop_frames` and estimates the direction at
/// each center frame.
pub fn track(tracker: &Tracker, signal: &FoaSignal, truth: &Direction, hop_frames: usize) -> Result<TrackResult> {
    if hop_frames == 0 {
        return Err(Error::InvalidInput("hop must be at least one frame".into()));
    }
    let (config, window) = match tracker {
        Tracker::Network(net) => (net.config().stft, net.config().frames),
        Tracker::Music { config, .. } => (config.stft, WINDOW_FRAMES),
    };
    let needed = config.samples_for(window);
    if signal.len() < needed {
        return Err(Error::TooShort {
            needed,
            available: signal.len(),
        });
    }
    let frames = (signal.len() - config.window) / config.hop + 1;
    let spec = stft(signal, frames, config)?;
    let mut result = TrackResult {
        timestamps: Vec::new(),
        predictions: Vec::new(),
        errors: Vec::new(),
    };
    let mut center = window / 2;
    while center - window / 2 + window <= frames {
        let pred = match tracker {
            Tracker::Network(net) => predict_window(net, &spec, center)?,
            Tracker::Music { grid, config } => {
                music_from_spectrogram(&spec.slice_frames(center - window / 2, window)?, grid, config)?.direction
            }
        };
        result.timestamps.push(spec.frame_time(center));
        result.errors.push(angular_error(&pred, truth));
        result.predictions.push(pred);
        center += hop_frames;
    }
    Ok(result)
}
