use serde::Serialize;

use super::{Network, NnError, Tensor};

/// Denominator floor for the relative error. Some gradients are exactly zero
/// (a conv bias feeding batchnorm), and finite differences of those only see
/// rounding noise of order 1e-10.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index (in trainable order) of the worst parameter.
    pub worst_param: usize,
    pub params_checked: usize,
}

/// Compares backprop gradients of the batch-mean BCE with central finite
/// differences over every trainable parameter. Batchnorm uses batch
/// statistics and dropout is off.
///
/// Relative error per parameter is `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn gradient_check(net: &Network, batch: &[&Tensor], labels: &[f64], epsilon: f64) -> Result<GradCheck, NnError> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(NnError::InvalidConfig(format!(
            "finite-difference step {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let (_, grads) = net.loss_and_gradients(batch, labels)?;
    let analytic = grads.flat();

    let mut probe = net.clone();
    let mut flat = 0usize;
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: 0,
        params_checked: analytic.len(),
    };
    for layer in 0..probe.params().len() {
        let vectors = probe.params()[layer].trainable().len();
        for vec_idx in 0..vectors {
            let len = probe.params()[layer].trainable()[vec_idx].len();
            for k in 0..len {
                let original = probe.params()[layer].trainable()[vec_idx][k];
                probe.params_mut()[layer].trainable_mut()[vec_idx][k] = original + epsilon;
                let plus = probe.batch_loss(batch, labels)?;
                probe.params_mut()[layer].trainable_mut()[vec_idx][k] = original - epsilon;
                let minus = probe.batch_loss(batch, labels)?;
                probe.params_mut()[layer].trainable_mut()[vec_idx][k] = original;

                let numeric = (plus - minus) / (2.0 * epsilon);
                let a = analytic[flat];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
                if rel > worst.max_rel_error {
                    worst.max_rel_error = rel;
                    worst.worst_param = flat;
                }
                worst.max_abs_error = worst.max_abs_error.max(abs);
                flat += 1;
            }
        }
    }
    Ok(worst)
}
