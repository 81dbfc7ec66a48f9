use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ambisonics::FoaSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window: 1024,
            hop: 512,
        }
    }
}

impl StftConfig {
    pub fn n_bins(&self) -> usize {
        self.window / 2 + 1
    }

    /// Samples needed for `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window
        }
    }

    /// Periodic Hann window.
    pub fn hann(&self) -> Vec<f64> {
        let n = self.window as f64;
        (0..self.window)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }
}

/// One-sided complex spectrogram of a 4-channel signal, indexed (channel, frame, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Vec<Complex64>,
    frames: usize,
    n_bins: usize,
    pub sample_rate: u32,
    pub config: StftConfig,
}

impl Spectrogram {
    pub fn from_parts(
        bins: Vec<Complex64>,
        frames: usize,
        n_bins: usize,
        sample_rate: u32,
        config: StftConfig,
    ) -> Result<Self> {
        if bins.len() != 4 * frames * n_bins {
            return Err(Error::Shape {
                expected: format!("4 x {frames} x {n_bins}"),
                actual: format!("{} values", bins.len()),
            });
        }
        Ok(Spectrogram {
            bins,
            frames,
            n_bins,
            sample_rate,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    #[inline]
    pub fn get(&self, channel: usize, frame: usize, bin: usize) -> Complex64 {
        self.bins[(channel * self.frames + frame) * self.n_bins + bin]
    }

    pub fn scaled(&self, factor: f64) -> Spectrogram {
        Spectrogram {
            bins: self.bins.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Frames `start..start + len` as a new spectrogram.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Spectrogram> {
        if start + len > self.frames || len == 0 {
            return Err(Error::InvalidInput(format!(
                "frame window {start}..{} outside 0..{}",
                start + len,
                self.frames
            )));
        }
        let mut bins = Vec::with_capacity(4 * len * self.n_bins);
        for c in 0..4 {
            let from = (c * self.frames + start) * self.n_bins;
            bins.extend_from_slice(&self.bins[from..from + len * self.n_bins]);
        }
        Ok(Spectrogram {
            bins,
            frames: len,
            ..self.clone()
        })
    }

    /// Center frequency of `bin` in Hz.
    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.config.window as f64
    }

    /// Time of the center of `frame` in seconds.
    pub fn frame_time(&self, frame: usize) -> f64 {
        (frame * self.config.hop + self.config.window / 2) as f64 / self.sample_rate as f64
    }
}

/// Hann-windowed STFT keeping the first `frames` frames.
pub fn stft(signal: &FoaSignal, frames: usize, config: StftConfig) -> Result<Spectrogram> {
    if config.window < 2 || config.hop == 0 {
        return Err(Error::InvalidConfig(format!("bad STFT configuration {config:?}")));
    }
    if frames == 0 {
        return Err(Error::InvalidInput("at least one frame is required".into()));
    }
    let needed = config.samples_for(frames);
    if signal.len() < needed {
        return Err(Error::TooShort {
            needed,
            available: signal.len(),
        });
    }
    let n_bins = config.n_bins();
    let window = config.hann();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.window);
    let mut bins = Vec::with_capacity(4 * frames * n_bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); config.window];
    for c in 0..4 {
        let ch = signal.channel(c);
        for t in 0..frames {
            let offset = t * config.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(ch[offset + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            bins.extend_from_slice(&buf[..n_bins]);
        }
    }
    Ok(Spectrogram {
        bins,
        frames,
        n_bins,
        sample_rate: signal.sample_rate(),
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambisonics::{encode_plane_wave, Foa};
    use crate::sphere::Direction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_signal_zero_spectrum() {
        let s = stft(&Foa::zeros(5000, 16_000), 4, StftConfig::default()).unwrap();
        assert_eq!(s.n_bins(), 513);
        assert!(s.bins.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn sine_peaks_at_its_bin() {
        let k = 40;
        let fs = 16_000.0;
        let f = k as f64 * fs / 1024.0;
        let sig: Vec<f64> = (0..8000).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
        let foa = encode_plane_wave(&sig, &Direction::from_degrees(0.0, 0.0), 16_000).unwrap();
        let s = stft(&foa, 10, StftConfig::default()).unwrap();
        for t in 0..10 {
            let peak = (0..s.n_bins())
                .max_by(|a, b| s.get(0, t, *a).norm().total_cmp(&s.get(0, t, *b).norm()))
                .unwrap();
            assert_eq!(peak, k);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = StftConfig::default();
        let chans = std::array::from_fn(|_| (0..6000).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let foa = Foa::new(chans, 16_000).unwrap();
        let s = stft(&foa, 5, cfg).unwrap();
        let w = cfg.hann();
        for c in 0..4 {
            for t in 0..5 {
                let time: f64 = (0..cfg.window)
                    .map(|i| (foa.channel(c)[t * cfg.hop + i] * w[i]).powi(2))
                    .sum::<f64>()
                    * cfg.window as f64;
                let last = s.n_bins() - 1;
                let freq: f64 = (0..s.n_bins())
                    .map(|k| {
                        let e = s.get(c, t, k).norm_sqr();
                        if k == 0 || k == last {
                            e
                        } else {
                            2.0 * e
                        }
                    })
                    .sum();
                assert!((time - freq).abs() / time < 1e-6);
            }
        }
    }

    #[test]
    fn too_short_is_an_error() {
        let r = stft(&Foa::zeros(1000, 16_000), 1, StftConfig::default());
        assert!(matches!(r, Err(Error::TooShort { needed: 1024, .. })));
        let cfg = StftConfig { window: 256, hop: 128 };
        assert_eq!(cfg.samples_for(25), 3328);
        assert!(stft(&Foa::zeros(3328, 16_000), 25, cfg).is_ok());
    }

    #[test]
    fn slicing_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chans = std::array::from_fn(|_| (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let foa = Foa::new(chans, 16_000).unwrap();
        let cfg = StftConfig { window: 256, hop: 128 };
        let s = stft(&foa, 20, cfg).unwrap();
        let part = s.slice_frames(5, 3).unwrap();
        for c in 0..4 {
            for t in 0..3 {
                for k in 0..part.n_bins() {
                    assert_eq!(part.get(c, t, k), s.get(c, t + 5, k));
                }
            }
        }
        assert!(s.slice_frames(18, 3).is_err());
    }
}
