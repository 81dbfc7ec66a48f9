//! MUSIC pseudospectrum over a sphere grid, steering with the FOA gains.

use std::ops::Range;

use nalgebra::{Matrix4, SymmetricEigen};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ambisonics::{foa_gains, FoaSignal};
use crate::dsp::{stft, Spectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::sphere::{Direction, SphereGrid};

const SCORE_EPS: f64 = 1e-12;
pub const MIN_FRAMES: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicConfig {
    pub stft: StftConfig,
    pub min_hz: f64,
    pub max_hz: f64,
    pub n_sources: usize,
}

impl Default for MusicConfig {
    fn default() -> Self {
        MusicConfig {
            stft: StftConfig::default(),
            min_hz: 300.0,
            max_hz: 4000.0,
            n_sources: 1,
        }
    }
}

/// Frame-averaged 4×4 spatial covariance per frequency bin.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub bins: Vec<usize>,
    pub matrices: Vec<Matrix4<Complex64>>,
}

/// Bins whose center frequency lies in `[min_hz, max_hz]`.
pub fn bin_range(spec: &Spectrogram, min_hz: f64, max_hz: f64) -> Range<usize> {
    let lo = (0..spec.n_bins()).find(|b| spec.bin_frequency(*b) >= min_hz).unwrap_or(spec.n_bins());
    let hi = (0..spec.n_bins()).rev().find(|b| spec.bin_frequency(*b) <= max_hz).map_or(0, |b| b + 1);
    lo..hi.max(lo)
}

/// R_f = (1/T) Σ_t x(t, f) x(t, f)ᴴ for each bin in `bins`.
pub fn spatial_covariance(spec: &Spectrogram, bins: Range<usize>) -> Result<CovarianceSet> {
    if spec.frames() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            available: spec.frames(),
        });
    }
    if bins.end > spec.n_bins() {
        return Err(Error::InvalidInput(format!("bin range {bins:?} exceeds {} bins", spec.n_bins())));
    }
    let t = spec.frames() as f64;
    let matrices = bins
        .clone()
        .map(|f| {
            let mut r = Matrix4::<Complex64>::zeros();
            for frame in 0..spec.frames() {
                let x: [Complex64; 4] = std::array::from_fn(|c| spec.get(c, frame, f));
                for i in 0..4 {
                    for j in 0..4 {
                        r[(i, j)] += x[i] * x[j].conj();
                    }
                }
            }
            r / Complex64::new(t, 0.0)
        })
        .collect();
    Ok(CovarianceSet {
        bins: bins.collect(),
        matrices,
    })
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sorted_eigen(r: &Matrix4<Complex64>) -> ([f64; 4], Matrix4<Complex64>) {
    let eig = SymmetricEigen::new(*r);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = Matrix4::from_fn(|row, col| eig.eigenvectors[(row, order[col])]);
    (values, vectors)
}

/// Mean over bins of per-bin max-normalized `1 / (‖E_nᴴ a(d)‖² + ε)` for
/// each grid class. Bins without energy are skipped.
pub fn music_spectrum(cov: &CovarianceSet, grid: &SphereGrid, n_sources: usize) -> Result<Vec<f64>> {
    if n_sources == 0 || n_sources >= 4 {
        return Err(Error::InvalidConfig(format!("n_sources must be 1..=3, got {n_sources}")));
    }
    let steering: Vec<[f64; 4]> = grid.directions().iter().map(foa_gains).collect();
    let per_bin: Vec<Option<Vec<f64>>> = cov
        .matrices
        .par_iter()
        .zip(&cov.bins)
        .map(|(r, bin)| {
            if r.trace().re <= 0.0 {
                return Ok(None);
            }
            let (values, vectors) = sorted_eigen(r);
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Decomposition(*bin));
            }
            // real part of the noise projector; its imaginary part cancels for real steering
            let n_noise = 4 - n_sources;
            let mut p = [[0.0; 4]; 4];
            for k in 0..n_noise {
                let e = vectors.column(k);
                for i in 0..4 {
                    for j in 0..4 {
                        p[i][j] += (e[i] * e[j].conj()).re;
                    }
                }
            }
            let mut scores: Vec<f64> = steering
                .iter()
                .map(|a| {
                    let mut q = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            q += a[i] * p[i][j] * a[j];
                        }
                    }
                    1.0 / (q.max(0.0) + SCORE_EPS)
                })
                .collect();
            let max = scores.iter().cloned().fold(0.0, f64::max);
            scores.iter_mut().for_each(|s| *s /= max);
            Ok(Some(scores))
        })
        .collect::<Result<_>>()?;
    let active: Vec<&Vec<f64>> = per_bin.iter().flatten().collect();
    if active.is_empty() {
        return Err(Error::Silent("no energy in the MUSIC frequency band"));
    }
    let mut total = vec![0.0; grid.len()];
    for s in &active {
        for (t, v) in total.iter_mut().zip(s.iter()) {
            *t += v;
        }
    }
    total.iter_mut().for_each(|t| *t /= active.len() as f64);
    Ok(total)
}

/// Classes sorted by descending score, ties by index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    idx.into_iter().take(k).map(|i| (i, scores[i])).collect()
}

#[derive(Debug, Clone)]
pub struct MusicResult {
    pub direction: Direction,
    pub class: usize,
    pub scores: Vec<f64>,
}

/// MUSIC on the whole spectrogram.
pub fn music_from_spectrogram(spec: &Spectrogram, grid: &SphereGrid, cfg: &MusicConfig) -> Result<MusicResult> {
    let cov = spatial_covariance(spec, bin_range(spec, cfg.min_hz, cfg.max_hz))?;
    let scores = music_spectrum(&cov, grid, cfg.n_sources)?;
    let class = top_k(&scores, 1)[0].0;
    Ok(MusicResult {
        direction: grid.center(class),
        class,
        scores,
    })
}

/// MUSIC over every complete frame of `signal`; needs at least 25 frames.
pub fn music_analyze(signal: &FoaSignal, grid: &SphereGrid, cfg: &MusicConfig) -> Result<MusicResult> {
    let needed = cfg.stft.samples_for(MIN_FRAMES);
    if signal.len() < needed {
        return Err(Error::TooShort {
            needed,
            available: signal.len(),
        });
    }
    let frames = (signal.len() - cfg.stft.window) / cfg.stft.hop + 1;
    music_from_spectrogram(&stft(signal, frames, cfg.stft)?, grid, cfg)
}

pub fn music_estimate(signal: &FoaSignal, grid: &SphereGrid) -> Result<Direction> {
    Ok(music_analyze(signal, grid, &MusicConfig::default())?.direction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambisonics::{encode_plane_wave, Foa};
    use crate::dsp::{mix_noise, speech_shaped_noise};
    use crate::sphere::{great_circle, random_direction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn plane_wave_covariance_is_rank_one_and_hermitian() {
        let foa = encode_plane_wave(&noise(16_000, 1), &Direction::from_degrees(30.0, 10.0), 16_000).unwrap();
        let spec = stft(&foa, 20, StftConfig::default()).unwrap();
        let cov = spatial_covariance(&spec, 20..200).unwrap();
        for r in &cov.matrices {
            assert!((r - r.adjoint()).iter().all(|v| v.norm() < 1e-10));
            let (vals, vecs) = sorted_eigen(r);
            assert!(vals[0] >= -1e-10);
            assert!(vals[2] < 1e-8 * vals[3]);
            let ortho = vecs.adjoint() * vecs - Matrix4::identity();
            assert!(ortho.iter().all(|v| v.norm() < 1e-8));
        }
    }

    #[test]
    fn zero_signal_gives_zero_matrices() {
        let spec = stft(&Foa::zeros(16_000, 16_000), 10, StftConfig::default()).unwrap();
        let cov = spatial_covariance(&spec, 0..50).unwrap();
        assert!(cov.matrices.iter().all(|m| m.iter().all(|v| v.norm() == 0.0)));
        assert!(spatial_covariance(&spec.slice_frames(0, 1).unwrap(), 0..5).is_err());
    }

    #[test]
    fn peak_at_the_source_class() {
        let grid = SphereGrid::new(10.0).unwrap();
        for class in [0, 17, 200, grid.len() - 1] {
            let d = grid.center(class);
            let foa = encode_plane_wave(&noise(16_000, class as u64), &d, 16_000).unwrap();
            let r = music_analyze(&foa, &grid, &MusicConfig::default()).unwrap();
            assert_eq!(r.class, class);
            assert!(r.scores.iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn diffuse_noise_spectrum_is_flat() {
        let grid = SphereGrid::new(10.0).unwrap();
        let ssn = speech_shaped_noise(48_000, 3, 16_000).unwrap();
        let r = music_analyze(&ssn, &grid, &MusicConfig::default()).unwrap();
        let max = r.scores.iter().cloned().fold(0.0, f64::max);
        let min = r.scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "ratio {}", max / min);
    }

    #[test]
    fn noisy_plane_waves_and_scale_invariance() {
        let grid = SphereGrid::new(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..5 {
            let d = random_direction(&mut rng);
            let clean = encode_plane_wave(&noise(16_000, 100 + i), &d, 16_000).unwrap();
            let n = speech_shaped_noise(16_000, 200 + i, 16_000).unwrap();
            let noisy = mix_noise(&clean, &n, 20.0).unwrap();
            let est = music_estimate(&noisy, &grid).unwrap();
            assert!(great_circle(&est, &d).to_degrees() <= 10.0);
            assert_eq!(music_estimate(&noisy.scaled(7.5), &grid).unwrap(), est);
            assert_eq!(music_estimate(&noisy, &grid).unwrap(), est);
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        let grid = SphereGrid::new(30.0).unwrap();
        assert!(matches!(music_estimate(&Foa::zeros(5000, 16_000), &grid), Err(Error::TooShort { .. })));
    }

    #[test]
    fn top_k_orders_scores() {
        assert_eq!(top_k(&[0.2, 0.9, 0.5, 0.9], 3), vec![(1, 0.9), (3, 0.9), (2, 0.5)]);
    }
}
