//! First-order Ambisonics encoding with channel order W, X, Y, Z and gains
//! `(1, √3 cosθ cosφ, √3 sinθ cosφ, √3 sinφ)`.

use crate::acoustics::AcousticPath;
use crate::error::{Error, Result};
use crate::sphere::{Direction, Vec3};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Four equally long real channels (W, X, Y, Z) at one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Foa {
    channels: [Vec<f64>; 4],
    sample_rate: u32,
}

/// A sampled spatial room impulse response.
pub type FoaIr = Foa;
/// A 4-channel recording.
pub type FoaSignal = Foa;

impl Foa {
    pub fn new(channels: [Vec<f64>; 4], sample_rate: u32) -> Result<Self> {
        let n = channels[0].len();
        if n == 0 {
            return Err(Error::InvalidInput("FOA buffer needs at least one sample".into()));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape {
                expected: format!("4 channels of {n} samples"),
                actual: format!("{:?}", channels.iter().map(Vec::len).collect::<Vec<_>>()),
            });
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("FOA buffer contains non-finite samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        Ok(Foa {
            channels,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Foa {
            channels: std::array::from_fn(|_| vec![0.0; len.max(1)]),
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>; 4] {
        &self.channels
    }

    pub fn into_channels(self) -> [Vec<f64>; 4] {
        self.channels
    }

    pub fn scaled(&self, factor: f64) -> Foa {
        Foa {
            channels: self.channels.clone().map(|c| c.iter().map(|v| v * factor).collect()),
            sample_rate: self.sample_rate,
        }
    }

    /// Element-wise sum; the result has the longer length.
    pub fn add(&self, other: &Foa) -> Result<Foa> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRate(self.sample_rate, other.sample_rate));
        }
        let n = self.len().max(other.len());
        let channels = std::array::from_fn(|c| {
            (0..n)
                .map(|i| {
                    self.channels[c].get(i).copied().unwrap_or(0.0)
                        + other.channels[c].get(i).copied().unwrap_or(0.0)
                })
                .collect()
        });
        Ok(Foa {
            channels,
            sample_rate: self.sample_rate,
        })
    }

    /// Mean power of the W channel.
    pub fn w_power(&self) -> f64 {
        let w = &self.channels[0];
        w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64
    }
}

pub fn foa_gains(d: &Direction) -> [f64; 4] {
    gains_of_unit(&d.unit())
}

pub(crate) fn gains_of_unit(u: &Vec3) -> [f64; 4] {
    [1.0, SQRT_3 * u[0], SQRT_3 * u[1], SQRT_3 * u[2]]
}

/// Sample index of a delay, rounded to the nearest sample.
pub fn delay_to_sample(delay: f64, sample_rate: u32) -> usize {
    (delay * sample_rate as f64).round() as usize
}

/// Renders arrivals into a sampled FOA impulse response of `length` samples.
pub fn encode_srir(paths: &[AcousticPath], sample_rate: u32, length: usize) -> Result<FoaIr> {
    if length == 0 {
        return Err(Error::InvalidInput("impulse response length must be positive".into()));
    }
    let mut ir = Foa::zeros(length, sample_rate);
    let limit = length as f64 / sample_rate as f64;
    for (index, path) in paths.iter().enumerate() {
        let n = delay_to_sample(path.delay, sample_rate);
        if !(path.delay >= 0.0) || path.delay >= limit || n >= length {
            return Err(Error::PathBeyondLength {
                index,
                delay: path.delay,
                limit,
            });
        }
        let g = gains_of_unit(&path.direction);
        for (c, ch) in ir.channels.iter_mut().enumerate() {
            ch[n] += path.amplitude * g[c];
        }
    }
    Ok(ir)
}

/// Anechoic FOA recording of `signal` arriving as a plane wave from `d`.
pub fn encode_plane_wave(signal: &[f64], d: &Direction, sample_rate: u32) -> Result<FoaSignal> {
    if signal.is_empty() {
        return Err(Error::InvalidInput("plane-wave signal is empty".into()));
    }
    let g = foa_gains(d);
    Foa::new(
        std::array::from_fn(|c| signal.iter().map(|v| v * g[c]).collect()),
        sample_rate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::PathKind;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gain_examples() {
        let s3 = 3f64.sqrt();
        assert!(close(&foa_gains(&Direction::from_angles(0.0, 0.0)), &[1.0, s3, 0.0, 0.0], 1e-15));
        assert!(close(&foa_gains(&Direction::from_angles(FRAC_PI_2, 0.0)), &[1.0, 0.0, s3, 0.0], 1e-15));
        assert!(close(&foa_gains(&Direction::from_angles(0.0, FRAC_PI_2)), &[1.0, 0.0, 0.0, s3], 1e-15));
        let h = 6f64.sqrt() / 2.0;
        let g = foa_gains(&Direction::from_angles(FRAC_PI_4, 0.0));
        assert!(close(&g, &[1.0, h, h, 0.0], 1e-15));
        assert!((g[1] - 1.2247).abs() < 1e-4);
    }

    fn path(delay: f64, amplitude: f64, dir: Vec3) -> AcousticPath {
        let n = crate::sphere::norm(&dir);
        AcousticPath {
            direction: dir.map(|v| v / n),
            delay,
            amplitude,
            order: 0,
            kind: PathKind::Specular,
        }
    }

    #[test]
    fn single_path_srir() {
        let delay = 14f64.sqrt() / 343.0;
        let ir = encode_srir(&[path(delay, 1.0, [-2.0, -3.0, -1.0])], 16_000, 16_000).unwrap();
        let n = 175;
        assert_eq!(delay_to_sample(delay, 16_000), n);
        for c in 0..4 {
            for (i, v) in ir.channel(c).iter().enumerate() {
                if i != n {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        assert_eq!(ir.channel(0)[n], 1.0);
        let k = 3f64.sqrt() / 14f64.sqrt();
        assert!((ir.channel(1)[n] + 2.0 * k).abs() < 1e-15);
        assert!((ir.channel(2)[n] + 3.0 * k).abs() < 1e-15);
        assert!((ir.channel(3)[n] + k).abs() < 1e-15);
        // direction readout from (X, Y, Z) / √3
        let v = [1, 2, 3].map(|c| ir.channel(c)[n] / 3f64.sqrt());
        let d = Direction::from_vector(v).unwrap().unit();
        let truth = [-2.0, -3.0, -1.0].map(|x: f64| x / 14f64.sqrt());
        assert!(close(&d, &truth, 1e-9));
    }

    #[test]
    fn empty_paths_give_silence() {
        let ir = encode_srir(&[], 16_000, 64).unwrap();
        assert!(ir.channels().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn late_path_is_rejected() {
        let err = encode_srir(&[path(0.001, 1.0, [1.0, 0.0, 0.0]), path(0.5, 1.0, [1.0, 0.0, 0.0])], 16_000, 8000)
            .unwrap_err();
        assert!(matches!(err, Error::PathBeyondLength { index: 1, .. }));
    }

    #[test]
    fn encoding_is_linear_and_order_free() {
        let a = vec![path(0.010, 0.5, [1.0, 2.0, 0.5]), path(0.020, -0.25, [0.0, -1.0, 0.2])];
        let b = vec![path(0.010, 0.7, [-1.0, 0.0, 0.3]), path(0.031, 0.1, [0.2, 0.2, -1.0])];
        let ea = encode_srir(&a, 16_000, 1000).unwrap();
        let eb = encode_srir(&b, 16_000, 1000).unwrap();
        let mut all: Vec<_> = a.iter().chain(&b).cloned().collect();
        let e = encode_srir(&all, 16_000, 1000).unwrap();
        let sum = ea.add(&eb).unwrap();
        for c in 0..4 {
            assert!(close(e.channel(c), sum.channel(c), 1e-15));
        }
        all.reverse();
        let er = encode_srir(&all, 16_000, 1000).unwrap();
        for c in 0..4 {
            assert!(close(e.channel(c), er.channel(c), 1e-15));
        }
    }

    #[test]
    fn plane_wave_examples() {
        let mut imp = vec![0.0; 16];
        imp[0] = 1.0;
        let pw = encode_plane_wave(&imp, &Direction::from_angles(0.0, 0.0), 16_000).unwrap();
        assert_eq!(pw.channel(0), imp.as_slice());
        assert!((pw.channel(1)[0] - 3f64.sqrt()).abs() < 1e-15);
        assert!(pw.channel(2).iter().chain(pw.channel(3)).all(|v| *v == 0.0));

        let sine: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let up = encode_plane_wave(&sine, &Direction::from_angles(1.0, FRAC_PI_2), 16_000).unwrap();
        assert!(up.channel(1).iter().chain(up.channel(2)).all(|v| v.abs() < 1e-15));

        let d = Direction::from_angles(FRAC_PI_4, FRAC_PI_6);
        let pw = encode_plane_wave(&sine, &d, 16_000).unwrap();
        let ratio = 3f64.sqrt() * FRAC_PI_4.cos() * FRAC_PI_6.cos();
        assert!((ratio - 1.0607).abs() < 1e-4);
        for (w, x) in pw.channel(0).iter().zip(pw.channel(1)) {
            if w.abs() > 1e-6 {
                assert!((x / w - ratio).abs() < 1e-12);
            }
        }
        assert!(encode_plane_wave(&[], &d, 16_000).is_err());
    }
}
