use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::ambisonics::{Foa, FoaIr, FoaSignal};
use crate::error::{Error, Result};

/// Full linear convolution via zero-padded FFTs.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    let mut fb: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(b.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Convolves a mono dry signal with each FOA channel of `ir`.
pub fn convolve_foa(dry: &[f64], dry_rate: u32, ir: &FoaIr) -> Result<FoaSignal> {
    if dry_rate != ir.sample_rate() {
        return Err(Error::SampleRate(dry_rate, ir.sample_rate()));
    }
    if dry.is_empty() {
        return Err(Error::InvalidInput("dry signal is empty".into()));
    }
    let channels = std::array::from_fn(|c| fft_convolve(dry, ir.channel(c)));
    Foa::new(channels, dry_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::{AcousticPath, PathKind};
    use crate::ambisonics::encode_srir;

    fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    #[test]
    fn matches_direct_convolution() {
        let a: Vec<f64> = (0..37).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..13).map(|i| (i as f64 * 0.3).cos()).collect();
        let f = fft_convolve(&a, &b);
        let d = direct(&a, &b);
        assert_eq!(f.len(), d.len());
        for (x, y) in f.iter().zip(&d) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_returns_the_ir() {
        let ir = Foa::new(
            [vec![1.0, 0.5, 0.25], vec![0.1, 0.0, -0.2], vec![0.0, 0.3, 0.0], vec![-1.0, 0.0, 1.0]],
            16_000,
        )
        .unwrap();
        let out = convolve_foa(&[1.0], 16_000, &ir).unwrap();
        for c in 0..4 {
            for (x, y) in out.channel(c).iter().zip(ir.channel(c)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn omni_unit_ir_passes_dry_through_w() {
        let ir = Foa::new([vec![1.0], vec![0.0], vec![0.0], vec![0.0]], 16_000).unwrap();
        let dry: Vec<f64> = (0..100).map(|i| (i as f64 * 0.2).sin()).collect();
        let out = convolve_foa(&dry, 16_000, &ir).unwrap();
        for (x, y) in out.channel(0).iter().zip(&dry) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(out.channel(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn anechoic_path_delays_and_scales() {
        let path = AcousticPath {
            direction: [1.0, 0.0, 0.0],
            delay: 40.0 / 16_000.0,
            amplitude: 0.5,
            order: 0,
            kind: PathKind::Specular,
        };
        let ir = encode_srir(&[path], 16_000, 200).unwrap();
        let dry: Vec<f64> = (0..16_000).map(|i| ((i as f64) * 0.05).sin() * 0.3).collect();
        let out = convolve_foa(&dry, 16_000, &ir).unwrap();
        assert_eq!(out.len(), dry.len() + 199);
        for i in 0..dry.len() {
            assert!((out.channel(0)[i + 40] - 0.5 * dry[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_rate_mismatch() {
        let ir = Foa::zeros(4, 16_000);
        assert!(matches!(convolve_foa(&[1.0], 48_000, &ir), Err(Error::SampleRate(..))));
    }
}
