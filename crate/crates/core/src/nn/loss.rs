//! Cross-entropy loss with an L2 weight penalty.

use super::tensor::{Real, Tensor};
use crate::error::{CoreError, Result};

/// Probability floor keeping `-ln p` finite when a softmax output collapses.
pub const LOG_LOSS_FLOOR: f64 = 1e-12;

/// Sum of squared entries over the given weight tensors (biases excluded by
/// convention; callers pass weight matrices/kernel stacks only).
pub fn l2_weight_norm<F: Real>(weights: &[&Tensor<F>]) -> F {
    let mut sum = F::zero();
    for w in weights {
        for &v in w.data() {
            sum += v * v;
        }
    }
    sum
}

/// `-ln p(label) + lambda * sum ||W||^2` for a softmax output vector.
///
/// `p(label) = 0` is clamped by [`LOG_LOSS_FLOOR`], so the loss is always
/// finite.
pub fn cross_entropy_loss<F: Real>(
    probs: &[F],
    label: usize,
    weights: &[&Tensor<F>],
    lambda: f64,
) -> Result<F> {
    if label >= probs.len() {
        return Err(CoreError::Parameter(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let p = probs[label].cast_f64().max(LOG_LOSS_FLOOR);
    let ce = F::cast_from(-p.ln());
    Ok(ce + F::cast_from(lambda) * l2_weight_norm(weights))
}

/// dL/dz for the fused softmax + cross-entropy head: `p - onehot(label)`.
pub fn softmax_ce_d_logits<F: Real>(probs: &[F], label: usize, d_logits: &mut [F]) {
    debug_assert_eq!(probs.len(), d_logits.len());
    for (i, (g, &p)) in d_logits.iter_mut().zip(probs.iter()).enumerate() {
        *g = if i == label { p - F::one() } else { p };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_zero_loss() {
        let loss = cross_entropy_loss::<f64>(&[1.0, 0.0], 0, &[], 0.0).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn coin_flip_is_ln2() {
        let loss = cross_entropy_loss::<f64>(&[0.5, 0.5], 1, &[], 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn l2_term_adds_lambda_w_squared() {
        let w = Tensor::from_vec(&[1, 1], vec![2.0f64]).unwrap();
        let loss = cross_entropy_loss(&[0.5, 0.5], 0, &[&w], 0.01).unwrap();
        assert!((loss - (std::f64::consts::LN_2 + 0.04)).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped_not_infinite() {
        let loss = cross_entropy_loss::<f64>(&[0.0, 1.0], 0, &[], 0.0).unwrap();
        assert!(loss.is_finite());
        assert!((loss - (-LOG_LOSS_FLOOR.ln())).abs() < 1e-9);
    }
}
