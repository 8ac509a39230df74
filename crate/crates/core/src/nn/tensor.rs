//! Row-major tensor container and the scalar kernels built on it.

use crate::error::{CoreError, Result};
use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar used by the network stack. Implemented for `f32`
/// (production training/inference) and `f64` (gradient checking and tests).
pub trait Real:
    Float + num_traits::NumAssign + Sum + Send + Sync + Debug + Display + Default + 'static
{
    fn cast_from(v: f64) -> Self;
    fn cast_f64(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn cast_from(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn cast_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    #[inline(always)]
    fn cast_from(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn cast_f64(self) -> f64 {
        self
    }
}

/// Dense tensor with up to four extents, row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && shape.len() <= 4,
            "tensor rank must be 1..=4, got {}",
            shape.len()
        );
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 4 {
            return Err(CoreError::Dimension(format!(
                "tensor rank must be 1..=4, got {}",
                shape.len()
            )));
        }
        if data.len() != len {
            return Err(CoreError::Dimension(format!(
                "data length {} does not match shape {:?} (= {})",
                data.len(),
                shape,
                len
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// All stored values are finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(CoreError::Numeric(format!(
                "non-finite values in {what} (shape {:?})",
                self.shape
            )))
        }
    }

    /// Casts every element; used to move models between precisions in tests.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::cast_from(v.cast_f64())).collect(),
        }
    }
}

/// Dot product with a fixed eight-way accumulation tree.
///
/// The lane split keeps the loop free of a serial dependency so LLVM can
/// vectorize it; the combining order is fixed, so results are reproducible
/// for a given build regardless of caller or thread count.
#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    const LANES: usize = 8;
    let mut acc = [F::zero(); LANES];
    let chunks = a.len() / LANES;
    for i in 0..chunks {
        let pa = &a[i * LANES..i * LANES + LANES];
        let pb = &b[i * LANES..i * LANES + LANES];
        for j in 0..LANES {
            acc[j] = acc[j] + pa[j] * pb[j];
        }
    }
    for i in chunks * LANES..a.len() {
        acc[i % LANES] = acc[i % LANES] + a[i] * b[i];
    }
    // Fixed combine order: pairwise tree over the eight lanes.
    let s0 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let s1 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    s0 + s1
}

/// `dst += alpha * src`, element-wise.
#[inline]
pub fn axpy<F: Real>(alpha: F, src: &[F], dst: &mut [F]) {
    assert_eq!(src.len(), dst.len(), "axpy length mismatch");
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = *d + alpha * *s;
    }
}
