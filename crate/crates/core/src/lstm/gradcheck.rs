//! Central finite-difference verification of the analytic gradients.

use crate::error::Result;

use super::{bptt, sequence_forward, sequence_loss, LstmParams, Sequence};

pub const DEFAULT_GRAD_CHECK_EPS: f64 = 1e-5;

/// Compare every analytic gradient entry against a central difference of
/// the full loss (data term plus recurrent penalty). Returns the worst
/// relative error, with a 1e-12 floor in the denominator. Cost is two full
/// forward passes per parameter, so keep the instance small.
pub fn grad_check(
    params: &LstmParams,
    seq: &Sequence,
    l2_recurrent: f64,
    eps: f64,
) -> Result<f64> {
    let (_, caches) = sequence_forward(params, &seq.inputs)?;
    let (grads, _) = bptt(params, &caches, &seq.targets, l2_recurrent)?;

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for tensor_idx in 0..14 {
        for entry_idx in 0..grads.tensors()[tensor_idx].len() {
            let original = probe.tensors()[tensor_idx][entry_idx];
            probe.tensors_mut()[tensor_idx][entry_idx] = original + eps;
            let loss_plus = sequence_loss(&probe, &seq.inputs, &seq.targets, l2_recurrent)?;
            probe.tensors_mut()[tensor_idx][entry_idx] = original - eps;
            let loss_minus = sequence_loss(&probe, &seq.inputs, &seq.targets, l2_recurrent)?;
            probe.tensors_mut()[tensor_idx][entry_idx] = original;

            let numeric = (loss_plus - loss_minus) / (2.0 * eps);
            let analytic = grads.tensors()[tensor_idx][entry_idx];
            let denom = (analytic.abs() + numeric.abs()).max(1e-12);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
