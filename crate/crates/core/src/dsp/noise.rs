//! Noise generation, SNR-controlled mixing and the synthetic speech fallback.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::ambisonics::{gains_of_unit, Foa, FoaSignal};
use crate::error::{Error, Result};

pub const SNR_MEAN_DB: f64 = 15.0;
pub const SNR_STD_DB: f64 = 1.0;

/// Corner of the long-term speech spectrum: flat below, −6 dB/octave above.
const SPEECH_CORNER_HZ: f64 = 500.0;

pub fn sample_snr<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(SNR_MEAN_DB, SNR_STD_DB)
        .expect("valid normal parameters")
        .sample(rng)
}

/// Gain applied to noise of power `p_noise` so the mixture has `snr_db`
/// against a signal of power `p_signal`.
pub fn noise_scale(p_signal: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Adds `noise` (truncated to the signal length) at `snr_db`, with powers
/// measured on the W channel.
pub fn mix_noise(signal: &FoaSignal, noise: &FoaSignal, snr_db: f64) -> Result<FoaSignal> {
    if signal.sample_rate() != noise.sample_rate() {
        return Err(Error::SampleRate(signal.sample_rate(), noise.sample_rate()));
    }
    let n = signal.len();
    if noise.len() < n {
        return Err(Error::TooShort {
            needed: n,
            available: noise.len(),
        });
    }
    let p_signal = signal.w_power();
    let p_noise = noise.channel(0)[..n].iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(p_signal > 0.0) {
        return Err(Error::Silent("signal has zero power"));
    }
    if !(p_noise > 0.0) {
        return Err(Error::Silent("noise has zero power"));
    }
    let g = noise_scale(p_signal, p_noise, snr_db);
    let channels = std::array::from_fn(|c| {
        signal
            .channel(c)
            .iter()
            .zip(&noise.channel(c)[..n])
            .map(|(s, v)| s + g * v)
            .collect()
    });
    Foa::new(channels, signal.sample_rate())
}

/// White Gaussian noise shaped in the frequency domain by `gain(f)`.
fn shaped_noise(
    len: usize,
    sample_rate: u32,
    rng: &mut ChaCha8Rng,
    gain: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(len - k);
        let f = bin as f64 * sample_rate as f64 / len as f64;
        *v *= gain(f);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re / len as f64).collect()
}

fn speech_spectrum(f: f64) -> f64 {
    if f <= SPEECH_CORNER_HZ {
        1.0
    } else {
        SPEECH_CORNER_HZ / f
    }
}

/// Vertices of the regular icosahedron, normalized.
fn icosahedron() -> [[f64; 3]; 12] {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let n = (1.0 + g * g).sqrt();
    let mut out = [[0.0; 3]; 12];
    let mut i = 0;
    for a in [-1.0, 1.0] {
        for b in [-g, g] {
            out[i] = [0.0, a / n, b / n];
            out[i + 1] = [a / n, b / n, 0.0];
            out[i + 2] = [b / n, 0.0, a / n];
            i += 3;
        }
    }
    out
}

/// Diffuse speech-shaped noise: independent realizations arriving from the
/// 12 icosahedron vertices, summed in FOA. The long-term spectrum is flat up
/// to 500 Hz and falls 6 dB per octave above.
pub fn speech_shaped_noise(length: usize, seed: u64, sample_rate: u32) -> Result<FoaSignal> {
    if length < 1024 {
        return Err(Error::TooShort {
            needed: 1024,
            available: length,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channels: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; length]);
    let norm = 1.0 / 12f64.sqrt();
    for dir in icosahedron() {
        let g = gains_of_unit(&dir);
        let s = shaped_noise(length, sample_rate, &mut rng, speech_spectrum);
        for (c, ch) in channels.iter_mut().enumerate() {
            for (out, v) in ch.iter_mut().zip(&s) {
                *out += norm * g[c] * v;
            }
        }
    }
    Foa::new(channels, sample_rate)
}

/// Babble stand-in: six independent speech-shaped noise fields.
pub fn babble_noise(length: usize, seed: u64, sample_rate: u32) -> Result<FoaSignal> {
    let mut acc = speech_shaped_noise(length, seed.wrapping_mul(6), sample_rate)?;
    for k in 1..6u64 {
        acc = acc.add(&speech_shaped_noise(length, seed.wrapping_mul(6).wrapping_add(k), sample_rate)?)?;
    }
    Ok(acc.scaled(1.0 / 6f64.sqrt()))
}

/// Speech-like test signal used when no recorded speech is supplied: a train
/// of syllable bursts, each a glottal-like harmonic complex mixed with
/// band-limited noise under a raised-cosine envelope. The first burst starts
/// at sample 0. Output RMS is 0.1.
pub fn synthetic_speech(length: usize, seed: u64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = shaped_noise(length.max(1), sample_rate, &mut rng, |f| {
        if (100.0..6000.0).contains(&f) {
            speech_spectrum(f)
        } else {
            0.0
        }
    });
    let mut out = vec![0.0; length];
    let mut start = 0usize;
    while start < length {
        let dur = (rng.gen_range(0.08..0.25) * fs) as usize;
        let f0 = rng.gen_range(90.0..250.0);
        let glide = rng.gen_range(-0.3..0.3);
        let formants = [rng.gen_range(300.0..900.0), rng.gen_range(900.0..2500.0)];
        let noise_mix = rng.gen_range(0.3..1.0);
        let end = (start + dur).min(length);
        let mut phase = 0.0;
        for i in start..end {
            let t = (i - start) as f64 / dur as f64;
            let env = (PI * t).sin().powi(2);
            let f = f0 * (1.0 + glide * t);
            phase += 2.0 * PI * f / fs;
            let mut voiced = 0.0;
            let mut k = 1.0;
            while k * f < 4000.0 {
                let fk = k * f;
                let shape: f64 = formants
                    .iter()
                    .map(|fm| 1.0 / (1.0 + ((fk - fm) / 150.0).powi(2)))
                    .sum();
                voiced += (shape + 0.05) / k * (k * phase).sin();
                k += 1.0;
            }
            out[i] = env * (voiced + noise_mix * 8.0 * noise[i]);
        }
        start = end + (rng.gen_range(0.03..0.1) * fs) as usize;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / length.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambisonics::encode_plane_wave;
    use crate::dsp::{stft, StftConfig};
    use crate::sphere::Direction;

    #[test]
    fn scale_examples() {
        assert!((noise_scale(1.0, 1.0, 0.0) - 1.0).abs() < 1e-15);
        let g = noise_scale(1.0, 1.0, 10.0);
        assert!((g - 10f64.powf(-0.5)).abs() < 1e-15);
        assert!((g - 0.3162).abs() < 1e-4);
    }

    #[test]
    fn snr_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws: Vec<f64> = (0..10_000).map(|_| sample_snr(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((mean - 15.0).abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn mixing_hits_the_requested_snr() {
        let sig: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.07).sin()).collect();
        let signal = encode_plane_wave(&sig, &Direction::from_degrees(30.0, 10.0), 16_000).unwrap();
        let noise = speech_shaped_noise(5000, 1, 16_000).unwrap();
        let mixed = mix_noise(&signal, &noise, 12.0).unwrap();
        let residual: Vec<f64> = mixed.channel(0).iter().zip(signal.channel(0)).map(|(m, s)| m - s).collect();
        let p_res = residual.iter().map(|v| v * v).sum::<f64>() / residual.len() as f64;
        let snr = 10.0 * (signal.w_power() / p_res).log10();
        assert!((snr - 12.0).abs() < 1e-9);
    }

    #[test]
    fn mixing_errors() {
        let sig = Foa::zeros(2000, 16_000);
        let noise = speech_shaped_noise(2048, 1, 16_000).unwrap();
        assert!(mix_noise(&sig, &noise, 10.0).is_err());
        let live = encode_plane_wave(&vec![1.0; 2000], &Direction::from_degrees(0.0, 0.0), 16_000).unwrap();
        assert!(mix_noise(&live, &Foa::zeros(2000, 16_000), 10.0).is_err());
        assert!(mix_noise(&live, &speech_shaped_noise(1024, 1, 16_000).unwrap(), 10.0).is_err());
    }

    #[test]
    fn speech_shaped_noise_is_deterministic_and_live() {
        let a = speech_shaped_noise(4096, 5, 16_000).unwrap();
        let b = speech_shaped_noise(4096, 5, 16_000).unwrap();
        assert_eq!(a, b);
        assert!(a.w_power() > 0.0);
        assert!(speech_shaped_noise(100, 5, 16_000).is_err());
    }

    #[test]
    fn speech_shaped_noise_falls_six_db_per_octave() {
        let fs = 16_000;
        let noise = speech_shaped_noise(fs as usize * 4, 8, fs).unwrap();
        let cfg = StftConfig { window: 1024, hop: 512 };
        let frames = (noise.len() - 1024) / 512 + 1;
        let spec = stft(&noise, frames, cfg).unwrap();
        // average W power per bin, then fit dB against log2(frequency) over 500 Hz–7 kHz
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 1..spec.n_bins() {
            let f = k as f64 * fs as f64 / 1024.0;
            if !(500.0..=7000.0).contains(&f) {
                continue;
            }
            let p: f64 = (0..frames).map(|t| spec.get(0, t, k).norm_sqr()).sum::<f64>() / frames as f64;
            xs.push(f.log2());
            ys.push(10.0 * p.log10());
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 6.0).abs() < 3.0, "slope {slope} dB/octave");
    }

    #[test]
    fn babble_is_live_and_deterministic() {
        let a = babble_noise(2048, 3, 16_000).unwrap();
        assert_eq!(a, babble_noise(2048, 3, 16_000).unwrap());
        assert!(a.w_power() > 0.0);
    }

    #[test]
    fn synthetic_speech_starts_active() {
        let s = synthetic_speech(16_000, 2, 16_000);
        assert_eq!(s.len(), 16_000);
        let rms = (s.iter().map(|v| v * v).sum::<f64>() / 16_000.0).sqrt();
        assert!((rms - 0.1).abs() < 1e-9);
        let early: f64 = s[..800].iter().map(|v| v * v).sum();
        assert!(early > 0.0);
        assert_eq!(s, synthetic_speech(16_000, 2, 16_000));
    }
}
