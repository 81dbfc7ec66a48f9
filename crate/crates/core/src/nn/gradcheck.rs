use super::config::Target;
use super::network::{Network, NormMode};
use crate::dsp::FeatureTensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// block of the parameter with the largest error
    pub worst_block: String,
    pub checked: usize,
}

/// Compares analytic gradients with central finite differences on every
/// parameter. Relative error is `|a − n| / max(|a|, |n|, REL_FLOOR)`.
///
/// The two perturbed losses are differenced summand by summand before adding
/// up. Differencing the totals would lose most digits when the loss is large
/// (a few hundred for a fine categorical grid) and the gradient is small.
pub fn grad_check(net: &Network, batch: &[(&FeatureTensor, Target)], mode: NormMode) -> Result<GradCheckReport> {
    let analytic = net.loss_and_gradient(batch, mode)?.grad;
    let mut probe = net.clone();
    let mut worst = (0.0, 0usize);
    for i in 0..analytic.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let up = probe.batch_loss_terms(batch, mode)?;
        probe.params_mut()[i] = orig - FD_STEP;
        let down = probe.batch_loss_terms(batch, mode)?;
        probe.params_mut()[i] = orig;
        let numeric = up.iter().zip(&down).map(|(u, d)| u - d).sum::<f64>() / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_block: net.block_of(worst.1).to_string(),
        checked: analytic.len(),
    })
}
