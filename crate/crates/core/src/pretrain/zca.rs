//! ZCA whitening: the eigendecomposition-based transform
//! `U (Lambda + eps I)^{-1/2} U^T` with mean removal.

use crate::error::{CoreError, Result};
use crate::nn::Real;
use nalgebra::{DMatrix, SymmetricEigen};

/// Fitted whitening transform. The matrix is symmetric; fitting and storage
/// are 64-bit regardless of the pipeline precision.
#[derive(Clone, Debug, PartialEq)]
pub struct ZcaTransform {
    dim: usize,
    mean: Vec<f64>,
    /// Row-major `dim x dim` whitening matrix.
    mat: Vec<f64>,
    epsilon: f64,
}

impl ZcaTransform {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn matrix(&self) -> &[f64] {
        &self.mat
    }

    /// Rebuilds a transform from serialized parts.
    pub fn from_parts(dim: usize, mean: Vec<f64>, mat: Vec<f64>, epsilon: f64) -> Result<Self> {
        if mean.len() != dim || mat.len() != dim * dim {
            return Err(CoreError::Dimension(
                "ZCA parts inconsistent with declared dimension".into(),
            ));
        }
        Ok(ZcaTransform {
            dim,
            mean,
            mat,
            epsilon,
        })
    }

    /// `out = W (x - mean)`, accumulated in 64-bit.
    pub fn apply<F: Real>(&self, x: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        // Centered copy once; the matrix product then reads it d times.
        let mut centered = vec![0.0f64; self.dim];
        for (c, (&v, &m)) in centered.iter_mut().zip(x.iter().zip(self.mean.iter())) {
            *c = v.cast_f64() - m;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.mat[i * self.dim..(i + 1) * self.dim];
            *o = F::cast_from(crate::nn::tensor::dot(row, &centered));
        }
    }

    pub fn apply_vec<F: Real>(&self, x: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        self.apply(x, &mut out);
        out
    }
}

/// Fits a ZCA transform to a set of patches (one flat vector per patch).
///
/// Requires at least as many patches as dimensions. With `epsilon = 0` a
/// rank-deficient covariance is a singularity error rather than a silent
/// blow-up.
pub fn zca_fit<F: Real>(patches: &[Vec<F>], epsilon: f64) -> Result<ZcaTransform> {
    if patches.is_empty() {
        return Err(CoreError::Parameter("ZCA fit needs patches".into()));
    }
    let dim = patches[0].len();
    if patches.len() < dim {
        return Err(CoreError::Parameter(format!(
            "ZCA fit needs at least {dim} patches (one per dimension), got {}",
            patches.len()
        )));
    }
    if epsilon < 0.0 {
        return Err(CoreError::Parameter("ZCA epsilon must be nonnegative".into()));
    }
    let n = patches.len() as f64;
    let mut mean = vec![0.0f64; dim];
    for p in patches {
        if p.len() != dim {
            return Err(CoreError::Dimension("inconsistent patch lengths".into()));
        }
        for (m, &v) in mean.iter_mut().zip(p.iter()) {
            *m += v.cast_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    // Population covariance (1/n).
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0f64; dim];
    for p in patches {
        for (c, (&v, &m)) in centered.iter_mut().zip(p.iter().zip(mean.iter())) {
            *c = v.cast_f64() - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = 1e-12 * max_eig.max(1.0);
    if epsilon == 0.0 && eig.eigenvalues.iter().any(|&l| l < floor) {
        return Err(CoreError::Singularity(
            "covariance is rank deficient and ZCA epsilon is zero".into(),
        ));
    }

    // W = U (Lambda + eps I)^{-1/2} U^T
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let s = 1.0 / (eig.eigenvalues[k].max(0.0) + epsilon).sqrt();
        col *= s;
    }
    let w = &scaled * u.transpose();
    let mut mat = vec![0.0f64; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            mat[i * dim + j] = w[(i, j)];
        }
    }
    Ok(ZcaTransform {
        dim,
        mean,
        mat,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_input_gives_identity_transform() {
        // Four 2-D points with exact zero mean and identity covariance.
        let s = std::f64::consts::SQRT_2;
        let patches = vec![vec![s, 0.0], vec![-s, 0.0], vec![0.0, s], vec![0.0, -s]];
        let t = zca_fit(&patches, 0.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (t.matrix()[i * 2 + j] - expect).abs() < 1e-6,
                    "matrix {:?}",
                    t.matrix()
                );
            }
        }
    }

    #[test]
    fn constant_patches_whiten_to_zero() {
        let patches = vec![vec![0.7f64, 0.7, 0.7]; 10];
        let t = zca_fit(&patches, 0.1).unwrap();
        let out = t.apply_vec(&patches[0]);
        assert!(out.iter().all(|v| v.abs() < 1e-9), "{out:?}");
    }

    #[test]
    fn rank_deficient_without_epsilon_is_singularity_error() {
        // Second coordinate is constant: covariance rank 1.
        let patches: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, 1.0]).collect();
        match zca_fit(&patches, 0.0) {
            Err(CoreError::Singularity(_)) => {}
            other => panic!("expected singularity error, got {other:?}"),
        }
        assert!(zca_fit(&patches, 0.1).is_ok());
    }

    #[test]
    fn too_few_patches_is_error() {
        let patches = vec![vec![0.0f64; 8]; 4];
        assert!(zca_fit(&patches, 0.1).is_err());
    }

    #[test]
    fn whitened_samples_have_identity_covariance() {
        // Correlated 2-D Gaussian via a fixed linear mix of ChaCha uniforms.
        use rand::Rng;
        let mut rng = crate::rng::stream(3, "zca-mc", 0);
        let n = 100_000;
        let mut patches = Vec::with_capacity(n);
        for _ in 0..n {
            // Sum of 12 uniforms - 6 approximates a standard normal.
            let mut g = || {
                let mut s = 0.0f64;
                for _ in 0..12 {
                    s += rng.random::<f64>();
                }
                s - 6.0
            };
            let (a, b) = (g(), g());
            patches.push(vec![a + 0.8 * b, 0.5 * a - b + 2.0]);
        }
        let t = zca_fit(&patches, 0.0).unwrap();
        let whitened: Vec<Vec<f64>> = patches.iter().map(|p| t.apply_vec(p)).collect();
        let mut cov = [[0.0f64; 2]; 2];
        let mut mean = [0.0f64; 2];
        for w in &whitened {
            mean[0] += w[0];
            mean[1] += w[1];
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for w in &whitened {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (w[i] - mean[i]) * (w[j] - mean[j]);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] /= n as f64;
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov[i][j] - expect).abs() < 0.02,
                    "cov[{i}][{j}] = {}",
                    cov[i][j]
                );
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 1e-8), "{mean:?}");
    }
}
