//! Per-formulation losses over frame sequences, on activated outputs, plus
//! gradients with respect to the raw (pre-activation) outputs.

use super::config::Target;
use super::layers::sigmoid;
use crate::sphere::haversine_h;

pub const PROB_CLAMP: f64 = 1e-7;
pub const HAVERSINE_EPS: f64 = 1e-12;

/// Binary cross-entropy summed over classes against a one-hot target,
/// averaged over frames. `probs` is frames × classes.
pub fn loss_categorical(probs: &[f64], classes: usize, class: usize) -> f64 {
    let frames = probs.len() / classes;
    let mut total = 0.0;
    for row in probs.chunks_exact(classes) {
        for (c, p) in row.iter().enumerate() {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= if c == class { p.ln() } else { (1.0 - p).ln() };
        }
    }
    total / frames as f64
}

/// Mean over frames and components of the squared difference to `label`.
pub fn loss_cartesian(outputs: &[f64], label: &[f64; 3]) -> f64 {
    let frames = outputs.len() / 3;
    let sum: f64 = outputs
        .chunks_exact(3)
        .map(|o| (0..3).map(|i| (o[i] - label[i]).powi(2)).sum::<f64>())
        .sum();
    sum / (3 * frames) as f64
}

/// Mean over frames of the great-circle distance `2·asin(√h)` between each
/// (azimuth, elevation) output and the label, with h clamped away from 0 and 1.
pub fn loss_haversine(outputs: &[f64], azimuth: f64, elevation: f64) -> f64 {
    let frames = outputs.len() / 2;
    let sum: f64 = outputs
        .chunks_exact(2)
        .map(|o| {
            let h = haversine_h(o[0], o[1], azimuth, elevation).clamp(HAVERSINE_EPS, 1.0 - HAVERSINE_EPS);
            2.0 * h.sqrt().asin()
        })
        .sum();
    sum / frames as f64
}

/// Individual summands of the loss of raw outputs; they add up to the value
/// from [`loss_and_grad`]. Used to difference losses term by term.
pub(crate) fn loss_terms(raw: &[f64], dim: usize, target: &Target) -> Vec<f64> {
    let frames = raw.len() / dim;
    let inv = 1.0 / frames as f64;
    match *target {
        Target::Class(class) => raw
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let p = sigmoid(*z).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -inv * if i % dim == class { p.ln() } else { (1.0 - p).ln() }
            })
            .collect(),
        Target::Vector(label) => {
            let scale = 1.0 / (3 * frames) as f64;
            raw.iter().enumerate().map(|(i, o)| scale * (o - label[i % 3]).powi(2)).collect()
        }
        Target::Angles(az, el) => raw
            .chunks_exact(2)
            .map(|o| {
                let h = haversine_h(o[0], o[1], az, el).clamp(HAVERSINE_EPS, 1.0 - HAVERSINE_EPS);
                inv * 2.0 * h.sqrt().asin()
            })
            .collect(),
    }
}

/// Loss of raw network outputs (frames × dim) and its gradient.
pub(crate) fn loss_and_grad(raw: &[f64], dim: usize, target: &Target) -> (f64, Vec<f64>) {
    let frames = raw.len() / dim;
    let inv = 1.0 / frames as f64;
    match *target {
        Target::Class(class) => {
            let probs: Vec<f64> = raw.iter().map(|z| sigmoid(*z)).collect();
            let grad = probs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if *p < PROB_CLAMP || *p > 1.0 - PROB_CLAMP {
                        0.0
                    } else {
                        let y = if i % dim == class { 1.0 } else { 0.0 };
                        (p - y) * inv
                    }
                })
                .collect();
            (loss_categorical(&probs, dim, class), grad)
        }
        Target::Vector(label) => {
            let scale = 2.0 / (3 * frames) as f64;
            let grad = raw.iter().enumerate().map(|(i, o)| scale * (o - label[i % 3])).collect();
            (loss_cartesian(raw, &label), grad)
        }
        Target::Angles(az, el) => {
            let mut grad = vec![0.0; raw.len()];
            for (o, g) in raw.chunks_exact(2).zip(grad.chunks_exact_mut(2)) {
                let h = haversine_h(o[0], o[1], az, el);
                if !(HAVERSINE_EPS..=1.0 - HAVERSINE_EPS).contains(&h) {
                    continue;
                }
                let dd_dh = 1.0 / (h.sqrt() * (1.0 - h).sqrt());
                let (d_az, d_el) = (o[0] - az, o[1] - el);
                let dh_daz = 0.5 * o[1].cos() * el.cos() * d_az.sin();
                let dh_del = 0.5 * d_el.sin() - o[1].sin() * el.cos() * (d_az / 2.0).sin().powi(2);
                g[0] = inv * dd_dh * dh_daz;
                g[1] = inv * dd_dh * dh_del;
            }
            (loss_haversine(raw, az, el), grad)
        }
    }
}
