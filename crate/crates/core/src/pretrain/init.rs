//! Sparse Gaussian initialization: every hidden unit receives exactly `k`
//! nonzero incoming weights, the rest are exactly zero.

use crate::error::{CoreError, Result};
use crate::nn::{Real, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Builds an `[out, in]` weight matrix with `k` nonzeros per row drawn from
/// a zero-mean Gaussian with the given standard deviation.
pub fn sparse_init<F: Real, R: Rng>(
    out_dim: usize,
    in_dim: usize,
    k: usize,
    std_dev: f64,
    rng: &mut R,
) -> Result<Tensor<F>> {
    if k > in_dim {
        return Err(CoreError::Parameter(format!(
            "sparse init nonzero count {k} exceeds fan-in {in_dim}"
        )));
    }
    let normal = Normal::new(0.0, std_dev)
        .map_err(|e| CoreError::Parameter(format!("bad std dev: {e}")))?;
    let mut w = Tensor::zeros(&[out_dim, in_dim]);
    let data = w.data_mut();
    for row in 0..out_dim {
        let cols = rand::seq::index::sample(rng, in_dim, k);
        for c in cols.iter() {
            data[row * in_dim + c] = F::cast_from(normal.sample(rng));
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_row_has_exactly_k_nonzeros() {
        let mut rng = crate::rng::stream(5, "sparse", 0);
        let w = sparse_init::<f64, _>(40, 200, 15, 1.0, &mut rng).unwrap();
        for row in 0..40 {
            let nz = w.data()[row * 200..(row + 1) * 200]
                .iter()
                .filter(|v| **v != 0.0)
                .count();
            assert_eq!(nz, 15);
        }
    }

    #[test]
    fn k_equal_fan_in_is_dense() {
        let mut rng = crate::rng::stream(5, "sparse", 1);
        let w = sparse_init::<f64, _>(8, 12, 12, 1.0, &mut rng).unwrap();
        assert!(w.data().iter().all(|v| *v != 0.0));
    }

    #[test]
    fn k_above_fan_in_is_error() {
        let mut rng = crate::rng::stream(5, "sparse", 2);
        assert!(sparse_init::<f64, _>(2, 4, 5, 1.0, &mut rng).is_err());
    }

    #[test]
    fn fixed_seed_reproduces_bit_identical_matrix() {
        let mut a = crate::rng::stream(9, "sparse", 3);
        let mut b = crate::rng::stream(9, "sparse", 3);
        let wa = sparse_init::<f64, _>(16, 64, 15, 1.0, &mut a).unwrap();
        let wb = sparse_init::<f64, _>(16, 64, 15, 1.0, &mut b).unwrap();
        assert_eq!(wa.data(), wb.data());
    }
}
