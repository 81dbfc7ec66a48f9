use super::config::Formulation;
use super::network::{FrameOutputs, Network};
use crate::dsp::{intensity_features, Spectrogram};
use crate::error::{Error, Result};
use crate::sphere::{norm, Direction};

/// Smallest mean-vector norm a Cartesian decode accepts.
pub const AMBIGUITY_THRESHOLD: f64 = 1e-6;

/// Turns per-frame outputs into one direction: Cartesian outputs are
/// averaged and normalized, spherical outputs use a circular-mean azimuth
/// and a mean elevation, categorical scores are summed over frames and the
/// best class center returned.
pub fn decode(formulation: &Formulation, out: &FrameOutputs) -> Result<Direction> {
    let frames = out.frames as f64;
    match formulation {
        Formulation::Cartesian => {
            let mut m = [0.0; 3];
            for t in 0..out.frames {
                for (i, v) in out.row(t).iter().enumerate() {
                    m[i] += v / frames;
                }
            }
            let n = norm(&m);
            if !(n >= AMBIGUITY_THRESHOLD) {
                return Err(Error::Ambiguous(n));
            }
            Direction::from_vector(m)
        }
        Formulation::Spherical => {
            let (mut s, mut c, mut el) = (0.0, 0.0, 0.0);
            for t in 0..out.frames {
                let r = out.row(t);
                s += r[0].sin();
                c += r[0].cos();
                el += r[1];
            }
            let el = (el / frames).clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
            Ok(Direction::from_angles(s.atan2(c), el))
        }
        Formulation::Categorical { grid } => Ok(grid.center(best_class(out))),
    }
}

/// Class with the highest score summed over frames; lowest index on ties.
pub fn best_class(out: &FrameOutputs) -> usize {
    class_scores(out)
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| if *s > best.1 { (i, *s) } else { best })
        .0
}

pub fn class_scores(out: &FrameOutputs) -> Vec<f64> {
    let mut sums = vec![0.0; out.dim];
    for t in 0..out.frames {
        for (s, v) in sums.iter_mut().zip(out.row(t)) {
            *s += v;
        }
    }
    sums
}

/// First frame of the window centered on `center`.
pub fn window_start(center: usize, frames: usize) -> usize {
    center.saturating_sub(frames / 2)
}

/// Estimates the direction from the network's frame window centered on `center`.
pub fn predict_window(net: &Network, spec: &Spectrogram, center: usize) -> Result<Direction> {
    let frames = net.config().frames;
    if center < frames / 2 || center - frames / 2 + frames > spec.frames() {
        return Err(Error::InvalidInput(format!(
            "a {frames}-frame window centered on frame {center} does not fit in {} frames",
            spec.frames()
        )));
    }
    let window = spec.slice_frames(window_start(center, frames), frames)?;
    let out = net.forward(&intensity_features(&window))?;
    decode(net.formulation(), &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::SphereGrid;

    fn outputs(frames: usize, dim: usize, values: Vec<f64>) -> FrameOutputs {
        FrameOutputs::new(frames, dim, values).unwrap()
    }

    #[test]
    fn cartesian_mean_is_normalized() {
        let d = decode(&Formulation::Cartesian, &outputs(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        let h = 2f64.sqrt() / 2.0;
        let u = d.unit();
        assert!((u[0] - h).abs() < 1e-12 && (u[1] - h).abs() < 1e-12 && u[2].abs() < 1e-12);
        let err = decode(&Formulation::Cartesian, &outputs(2, 3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::Ambiguous(_))));
    }

    #[test]
    fn identical_frames_decode_to_themselves() {
        let d = decode(&Formulation::Spherical, &outputs(3, 2, [0.4, -0.2].repeat(3))).unwrap();
        let (a, e) = d.angles();
        assert!((a - 0.4).abs() < 1e-12 && (e + 0.2).abs() < 1e-12);
    }

    #[test]
    fn spherical_azimuth_wraps() {
        let d = decode(&Formulation::Spherical, &outputs(2, 2, vec![3.1, 0.0, -3.1, 0.0])).unwrap();
        assert!(d.azimuth().abs() > 3.1);
    }

    #[test]
    fn categorical_votes_accumulate() {
        let grid = SphereGrid::new(45.0).unwrap();
        let dim = grid.len();
        let mut v = vec![0.0; 2 * dim];
        v[3] = 0.9;
        v[7] = 0.8;
        v[dim + 7] = 0.9;
        v[dim + 3] = 0.1;
        let out = outputs(2, dim, v);
        assert_eq!(best_class(&out), 7);
        let f = Formulation::Categorical { grid: grid.clone() };
        assert_eq!(decode(&f, &out).unwrap(), grid.center(7));
    }
}
