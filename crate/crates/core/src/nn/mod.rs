//! Convolutional-recurrent DOA estimator with categorical, Cartesian and
//! spherical output heads, trained from scratch on the CPU.

mod checkpoint;
mod config;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod predict;
mod train;

pub use checkpoint::{from_bytes, load_model, save_model, to_bytes};
pub use config::{Formulation, NetworkConfig, Target};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP, REL_FLOOR};
pub use loss::{loss_cartesian, loss_categorical, loss_haversine, HAVERSINE_EPS, PROB_CLAMP};
pub use network::{BatchGradient, Block, FrameOutputs, Network, NormMode, BN_EPS, BN_MOMENTUM};
pub use predict::{best_class, class_scores, decode, predict_window, window_start, AMBIGUITY_THRESHOLD};
pub use train::{split_indices, train, train_network, Adam, EpochStats, History, Sample, TrainConfig};

#[cfg(test)]
mod gradcheck_tests {
    use super::*;
    use crate::dsp::FeatureTensor;
    use crate::sphere::Direction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(seed: u64) -> FeatureTensor {
        let cfg = NetworkConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6 * cfg.frames * cfg.freq_bins;
        FeatureTensor::new(cfg.frames, cfg.freq_bins, (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect()).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences_in_both_modes() {
        let label = Direction::from_degrees(40.0, -20.0);
        let (x1, x2) = (input(1), input(2));
        for f in [Formulation::Cartesian, Formulation::Spherical, Formulation::categorical(10.0).unwrap()] {
            let net = Network::new(NetworkConfig::tiny(), f.clone(), 11).unwrap();
            let t = f.target(&label);
            for mode in [NormMode::Batch, NormMode::Running] {
                let r = grad_check(&net, &[(&x1, t), (&x2, t)], mode).unwrap();
                assert!(r.max_rel_error < 1e-4, "{} {mode:?}: {r:?}", f.name());
            }
        }
    }
}
