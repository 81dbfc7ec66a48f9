use super::RoomConfig;
use crate::ambisonics::Foa;
use crate::error::{Error, Result};

/// Schroeder backward integral of the squared W channel, in dB relative to
/// the total energy. Samples after the last non-zero sample are −∞.
pub fn energy_decay_curve(ir: &Foa) -> Result<Vec<f64>> {
    let w = ir.channel(0);
    let mut tail = vec![0.0; w.len()];
    let mut acc = 0.0;
    for i in (0..w.len()).rev() {
        acc += w[i] * w[i];
        tail[i] = acc;
    }
    let total = tail.first().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Err(Error::Silent("impulse response W channel is all zeros"));
    }
    let mut edc: Vec<f64> = tail.iter().map(|e| 10.0 * (e / total).log10()).collect();
    // the backward sum is non-increasing; guard against rounding wobble
    for i in 1..edc.len() {
        if edc[i] > edc[i - 1] {
            edc[i] = edc[i - 1];
        }
    }
    Ok(edc)
}

/// T30-style estimate: least-squares line through the −5…−35 dB part of the
/// curve, extrapolated to 60 dB of decay.
pub fn estimate_rt60(edc: &[f64], sample_rate: u32) -> Result<f64> {
    let reached = edc.iter().cloned().fold(0.0, f64::min);
    if reached > -35.0 {
        return Err(Error::InsufficientDecay { reached_db: reached });
    }
    let start = edc.iter().position(|v| *v <= -5.0).unwrap_or(0);
    let end = edc.iter().position(|v| *v < -35.0).unwrap_or(edc.len());
    let dt = 1.0 / sample_rate as f64;
    let points: Vec<(f64, f64)> = (start..end).map(|i| (i as f64 * dt, edc[i])).collect();
    if points.len() < 2 {
        return Err(Error::InsufficientDecay { reached_db: reached });
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &points {
        sxy += (t - mean_t) * (v - mean_v);
        sxx += (t - mean_t) * (t - mean_t);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay { reached_db: reached });
    }
    Ok(-60.0 / slope)
}

/// Sabine reverberation time `0.161·V / Σ Sᵢαᵢ`.
pub fn sabine_rt60(room: &RoomConfig) -> Result<f64> {
    room.validate()?;
    let absorption_area: f64 = room
        .wall_areas()
        .iter()
        .enumerate()
        .map(|(w, s)| s * room.absorption.wall(w))
        .sum();
    if !(absorption_area > 0.0) {
        return Err(Error::InvalidConfig(
            "Sabine formula needs non-zero absorption".into(),
        ));
    }
    Ok(0.161 * room.volume() / absorption_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn w_only(samples: Vec<f64>) -> Foa {
        let n = samples.len();
        Foa::new(
            [samples, vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn impulse_steps_to_minus_infinity() {
        let mut s = vec![0.0; 10];
        s[3] = 1.0;
        let edc = energy_decay_curve(&w_only(s)).unwrap();
        assert!(edc[..=3].iter().all(|v| *v == 0.0));
        assert!(edc[4..].iter().all(|v| *v == f64::NEG_INFINITY));
    }

    #[test]
    fn silent_ir_is_an_error() {
        assert!(energy_decay_curve(&w_only(vec![0.0; 8])).is_err());
    }

    fn decaying_noise(rt60: f64, seconds: f64, seed: u64) -> Vec<f64> {
        let fs = 16_000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // amplitude decays 60 dB over rt60: exp(−3·ln10·t/rt60)
        (0..(seconds * fs) as usize)
            .map(|i| {
                let t = i as f64 / fs;
                let env = (-3.0 * 10f64.ln() * t / rt60).exp();
                env * rng.gen_range(-1.0..1.0)
            })
            .collect()
    }

    #[test]
    fn slope_of_decaying_noise() {
        let edc = energy_decay_curve(&w_only(decaying_noise(0.5, 1.5, 2))).unwrap();
        // slope between −5 and −35 dB should be about −120 dB/s
        let t5 = edc.iter().position(|v| *v <= -5.0).unwrap() as f64 / 16_000.0;
        let t35 = edc.iter().position(|v| *v <= -35.0).unwrap() as f64 / 16_000.0;
        let slope = -30.0 / (t35 - t5);
        assert!((slope + 120.0).abs() < 6.0, "slope {slope}");
        let rt = estimate_rt60(&edc, 16_000).unwrap();
        assert!((rt - 0.5).abs() < 0.025, "rt60 {rt}");
    }

    #[test]
    fn scaling_does_not_change_the_curve() {
        let s = decaying_noise(0.3, 0.5, 4);
        let a = energy_decay_curve(&w_only(s.clone())).unwrap();
        let b = energy_decay_curve(&w_only(s.iter().map(|v| v * 37.5).collect())).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x == y || (x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_is_non_increasing() {
        let edc = energy_decay_curve(&w_only(decaying_noise(0.2, 0.4, 9))).unwrap();
        assert_eq!(edc[0], 0.0);
        assert!(edc.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn short_decay_is_rejected() {
        let edc = vec![0.0, -3.0, -10.0, -20.0];
        assert!(estimate_rt60(&edc, 16_000).is_err());
    }

    #[test]
    fn sabine_examples() {
        let room = RoomConfig::new([4.0, 5.0, 3.0], 0.3, 0.0);
        let rt = sabine_rt60(&room).unwrap();
        assert!((rt - 0.161 * 60.0 / (0.3 * 94.0)).abs() < 1e-12);
        assert!((rt - 0.343).abs() < 1e-3);
        let dead = RoomConfig::new([4.0, 5.0, 3.0], 1.0, 0.0);
        assert!((sabine_rt60(&dead).unwrap() - 0.161 * 60.0 / 94.0).abs() < 1e-12);
        let doubled = RoomConfig::new([8.0, 10.0, 6.0], 0.3, 0.0);
        assert!((sabine_rt60(&doubled).unwrap() / rt - 2.0).abs() < 1e-12);
        assert!(sabine_rt60(&RoomConfig::new([4.0, 5.0, 3.0], 0.0, 0.0)).is_err());
    }
}
