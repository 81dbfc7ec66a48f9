use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Formulation, NetworkConfig};
use super::network::{Network, NormMode};
use super::predict::decode;
use crate::dsp::FeatureTensor;
use crate::error::{Error, Result};
use crate::sphere::{great_circle, Direction};

/// Adaptive moment estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Share of samples held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            clip_norm: Some(5.0),
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate {} must be non-negative", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig("validation fraction must lie in [0, 1)".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::InvalidConfig("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// A labelled feature tensor.
#[derive(Debug, Clone)]
pub struct Sample {
    pub features: FeatureTensor,
    pub label: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// mean mini-batch loss seen while updating
    pub batch_loss: f64,
    /// inference-mode loss over the training split after the epoch
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// mean angular error in degrees on the validation split
    pub val_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl History {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map(|e| e.train_loss).unwrap_or(self.initial_train_loss)
    }
}

/// Builds a network from `seed` and trains it on `samples`.
pub fn train(
    samples: &[Sample],
    net_config: NetworkConfig,
    formulation: Formulation,
    cfg: &TrainConfig,
) -> Result<(Network, History)> {
    let mut net = Network::new(net_config, formulation, cfg.seed)?;
    let history = train_network(&mut net, samples, cfg)?;
    Ok((net, history))
}

/// Splits `n` indices into (train, validation) deterministically from `seed`.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let mut n_val = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Mini-batch training in place.
pub fn train_network(net: &mut Network, samples: &[Sample], cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let formulation = net.formulation().clone();
    let targets: Vec<_> = samples.iter().map(|s| formulation.target(&s.label)).collect();
    let (train_idx, val_idx) = split_indices(samples.len(), cfg.validation_fraction, cfg.seed);
    let pairs = |idx: &[usize]| -> Vec<(&FeatureTensor, _)> {
        idx.iter().map(|i| (&samples[*i].features, targets[*i])).collect()
    };
    let train_set = pairs(&train_idx);
    let val_set = pairs(&val_idx);
    let eval_loss = |net: &Network, set: &[(&FeatureTensor, _)]| -> Result<Option<f64>> {
        if set.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        for chunk in set.chunks(64) {
            total += net.batch_loss(chunk, NormMode::Running)? * chunk.len() as f64;
        }
        Ok(Some(total / set.len() as f64))
    };
    let initial_train_loss = eval_loss(net, &train_set)?.unwrap();
    let initial_val_loss = eval_loss(net, &val_set)?;
    let mut adam = Adam::new(cfg.learning_rate, net.param_count());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1000 + epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|i| train_set[*i]).collect();
            let mut bg = net.loss_and_gradient(&batch, NormMode::Batch)?;
            if !bg.loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: bg.loss });
            }
            if let Some(limit) = cfg.clip_norm {
                let norm = bg.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > limit {
                    let s = limit / norm;
                    bg.grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam.update(net.params_mut(), &bg.grad);
            if let Some(i) = net.params().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("{} after update", net.block_of(i))));
            }
            net.update_running_stats(&bg.batch_stats);
            loss_sum += bg.loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = eval_loss(net, &train_set)?.unwrap();
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: train_loss });
        }
        let val_loss = eval_loss(net, &val_set)?;
        let val_error_deg = if val_idx.is_empty() {
            None
        } else {
            let errs: Vec<f64> = val_idx
                .iter()
                .map(|i| {
                    let out = net.forward(&samples[*i].features)?;
                    Ok(match decode(&formulation, &out) {
                        Ok(d) => great_circle(&d, &samples[*i].label).to_degrees(),
                        Err(Error::Ambiguous(_)) => 90.0,
                        Err(e) => return Err(e),
                    })
                })
                .collect::<Result<_>>()?;
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        };
        epochs.push(EpochStats {
            epoch,
            batch_loss: loss_sum / seen as f64,
            train_loss,
            val_loss,
            val_error_deg,
        });
    }
    Ok(History {
        initial_train_loss,
        initial_val_loss,
        epochs,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambisonics::encode_plane_wave;
    use crate::dsp::{intensity_features, stft};
    use crate::sphere::random_direction;
    use rand::Rng;

    fn tiny_samples(n: usize, seed: u64) -> Vec<Sample> {
        let cfg = NetworkConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let label = random_direction(&mut rng);
                let sig: Vec<f64> = (0..cfg.stft.samples_for(cfg.frames)).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let foa = encode_plane_wave(&sig, &label, 16_000).unwrap();
                let features = intensity_features(&stft(&foa, cfg.frames, cfg.stft).unwrap());
                Sample { features, label }
            })
            .collect()
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(0.01, 2);
        let mut p = vec![1.0, -1.0];
        adam.update(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let samples = tiny_samples(8, 1);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            batch_size: 4,
            ..Default::default()
        };
        let mut net = Network::new(NetworkConfig::tiny(), Formulation::Cartesian, 3).unwrap();
        let before = net.params().to_vec();
        train_network(&mut net, &samples, &cfg).unwrap();
        assert_eq!(net.params(), before.as_slice());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let samples = tiny_samples(40, 2);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 15,
            batch_size: 8,
            seed: 4,
            ..Default::default()
        };
        let (a, ha) = train(&samples, NetworkConfig::tiny(), Formulation::Cartesian, &cfg).unwrap();
        let (b, hb) = train(&samples, NetworkConfig::tiny(), Formulation::Cartesian, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params(), b.params());
        assert!(ha.final_train_loss() < ha.initial_train_loss);
        assert_eq!(ha.val_indices.len(), 4);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let samples = tiny_samples(2, 1);
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(train(&samples, NetworkConfig::tiny(), Formulation::Cartesian, &bad).is_err());
        assert!(train(&[], NetworkConfig::tiny(), Formulation::Cartesian, &TrainConfig::default()).is_err());
    }
}
