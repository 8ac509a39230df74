//! Differentiable layer primitives.
//!
//! Whole-image inference reuses exactly these functions (gather window,
//! then the shared [`dot`] kernel), so patch-wise and convolutional
//! evaluation of the same model produce identical arithmetic.

use super::tensor::{axpy, dot, Real, Tensor};
use crate::error::{CoreError, Result};
use rand::Rng;

/// Non-linearity applied by a dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, z: F) -> F {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => {
                if z > F::zero() {
                    z
                } else {
                    F::zero()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of the cached post-activation value.
    #[inline]
    pub fn derivative_from_output<F: Real>(self, y: F) -> F {
        match self {
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Identity => F::one(),
        }
    }
}

#[inline]
pub fn sigmoid<F: Real>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// Weights and bias of a densely connected layer.
#[derive(Clone, Debug)]
pub struct DenseParams<F> {
    /// `[out, in]` weight matrix.
    pub w: Tensor<F>,
    /// `[out]` bias vector.
    pub b: Tensor<F>,
}

impl<F: Real> DenseParams<F> {
    pub fn zeros(out: usize, input: usize) -> Self {
        DenseParams {
            w: Tensor::zeros(&[out, input]),
            b: Tensor::zeros(&[out]),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }
}

/// Kernel stack and bias of a 2-D convolution layer.
///
/// Kernels are stored `[k, kh, kw, cin]`, matching the `[h, w, c]` layout of
/// the maps they filter, so one gathered window row is contiguous.
#[derive(Clone, Debug)]
pub struct ConvParams<F> {
    pub kernels: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> ConvParams<F> {
    pub fn zeros(k: usize, kh: usize, kw: usize, cin: usize) -> Self {
        ConvParams {
            kernels: Tensor::zeros(&[k, kh, kw, cin]),
            b: Tensor::zeros(&[k]),
        }
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_extent(&self) -> (usize, usize, usize) {
        let s = self.kernels.shape();
        (s[1], s[2], s[3])
    }
}

/// `activation(W x + b + U d)`: a dense layer with an optional bias-free
/// metadata term added to the pre-activation.
///
/// The accumulation order is `(W·x + b) + (U·d)` per unit, so whole-image
/// inference can evaluate `W·x + b` once per window and add a cached `U·d`
/// later with bit-identical results.
pub fn dense_forward<F: Real>(
    x: &[F],
    p: &DenseParams<F>,
    meta: Option<(&Tensor<F>, &[F])>,
    activation: Activation,
    out: &mut [F],
) -> Result<()> {
    let (n_out, n_in) = (p.out_dim(), p.in_dim());
    if x.len() != n_in {
        return Err(CoreError::Dimension(format!(
            "dense input length {} != weight input extent {}",
            x.len(),
            n_in
        )));
    }
    if out.len() != n_out {
        return Err(CoreError::Dimension(format!(
            "dense output length {} != weight output extent {}",
            out.len(),
            n_out
        )));
    }
    if let Some((u, d)) = meta {
        if u.shape() != [n_out, d.len()] {
            return Err(CoreError::Dimension(format!(
                "metadata weights {:?} incompatible with |D|={} and layer width {}",
                u.shape(),
                d.len(),
                n_out
            )));
        }
    }
    let w = p.w.data();
    let b = p.b.data();
    for j in 0..n_out {
        let mut z = dot(&w[j * n_in..(j + 1) * n_in], x) + b[j];
        if let Some((u, d)) = meta {
            let un = d.len();
            z = z + dot(&u.data()[j * un..(j + 1) * un], d);
        }
        out[j] = activation.apply(z);
    }
    Ok(())
}

/// Gradient buffers matching a [`DenseParams`].
#[derive(Clone, Debug)]
pub struct DenseGrads<F> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> DenseGrads<F> {
    pub fn zeros_like(p: &DenseParams<F>) -> Self {
        DenseGrads {
            w: Tensor::zeros(p.w.shape()),
            b: Tensor::zeros(p.b.shape()),
        }
    }
}

/// Backprop through a dense layer.
///
/// `d_out` is dL/d(post-activation); `y` the cached post-activation and `x`
/// the cached input. Accumulates into `grads` (and the bias-free metadata
/// weight gradient when present), writes dL/dx into `d_x` when provided.
#[allow(clippy::too_many_arguments)]
pub fn dense_backward<F: Real>(
    x: &[F],
    y: &[F],
    d_out: &[F],
    p: &DenseParams<F>,
    meta: Option<(&[F], &mut Tensor<F>)>,
    activation: Activation,
    grads: &mut DenseGrads<F>,
    mut d_x: Option<&mut [F]>,
) {
    let (n_out, n_in) = (p.out_dim(), p.in_dim());
    debug_assert_eq!(x.len(), n_in);
    debug_assert_eq!(y.len(), n_out);
    debug_assert_eq!(d_out.len(), n_out);
    if let Some(dx) = d_x.as_deref_mut() {
        dx.iter_mut().for_each(|v| *v = F::zero());
    }
    let mut meta = meta;
    for j in 0..n_out {
        let dz = d_out[j] * activation.derivative_from_output(y[j]);
        if dz == F::zero() {
            continue;
        }
        axpy(dz, x, &mut grads.w.data_mut()[j * n_in..(j + 1) * n_in]);
        grads.b.data_mut()[j] += dz;
        if let Some((d, gm)) = meta.as_mut() {
            let un = d.len();
            axpy(dz, d, &mut gm.data_mut()[j * un..(j + 1) * un]);
        }
        if let Some(dx) = d_x.as_deref_mut() {
            axpy(dz, &p.w.data()[j * n_in..(j + 1) * n_in], dx);
        }
    }
}

/// Output extents of a valid-mode convolution.
pub fn conv_output_extent(h: usize, w: usize, kh: usize, kw: usize) -> Result<(usize, usize)> {
    if kh > h || kw > w {
        return Err(CoreError::Dimension(format!(
            "kernel {kh}x{kw} larger than input {h}x{w}"
        )));
    }
    Ok((h - kh + 1, w - kw + 1))
}

/// Copies the `kh x kw x c` window at `(y, x)` of `input` into `scratch`.
#[inline]
pub(crate) fn gather_window<F: Real>(
    input: &Tensor<F>,
    y: usize,
    x: usize,
    kh: usize,
    kw: usize,
    scratch: &mut [F],
) {
    let (_, w, c) = map_extent(input);
    let row = kw * c;
    let data = input.data();
    for ky in 0..kh {
        let src = (y + ky) * w * c + x * c;
        scratch[ky * row..(ky + 1) * row].copy_from_slice(&data[src..src + row]);
    }
}

#[inline]
fn map_extent<F: Real>(t: &Tensor<F>) -> (usize, usize, usize) {
    let s = t.shape();
    debug_assert_eq!(s.len(), 3, "feature maps are [h, w, c]");
    (s[0], s[1], s[2])
}

/// Valid-mode cross-correlation of `[h, w, cin]` maps with a kernel stack,
/// bias added per output map. Output is `[h-kh+1, w-kw+1, k]`.
pub fn conv2d_forward<F: Real>(
    input: &Tensor<F>,
    p: &ConvParams<F>,
    out: &mut Tensor<F>,
    scratch: &mut Vec<F>,
) -> Result<()> {
    let (h, w, c) = map_extent(input);
    let (kh, kw, cin) = p.kernel_extent();
    let k = p.num_kernels();
    if cin != c {
        return Err(CoreError::Dimension(format!(
            "kernel depth {cin} != input map count {c}"
        )));
    }
    let (oh, ow) = conv_output_extent(h, w, kh, kw)?;
    if out.shape() != [oh, ow, k] {
        return Err(CoreError::Dimension(format!(
            "conv output shape {:?} != expected [{oh}, {ow}, {k}]",
            out.shape()
        )));
    }
    let klen = kh * kw * c;
    scratch.resize(klen, F::zero());
    let kernels = p.kernels.data();
    let bias = p.b.data();
    let out_data = out.data_mut();
    for y in 0..oh {
        for x in 0..ow {
            gather_window(input, y, x, kh, kw, scratch);
            let dst = (y * ow + x) * k;
            for ki in 0..k {
                out_data[dst + ki] = dot(&kernels[ki * klen..(ki + 1) * klen], scratch) + bias[ki];
            }
        }
    }
    Ok(())
}

/// Gradient buffers matching a [`ConvParams`].
#[derive(Clone, Debug)]
pub struct ConvGrads<F> {
    pub kernels: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> ConvGrads<F> {
    pub fn zeros_like(p: &ConvParams<F>) -> Self {
        ConvGrads {
            kernels: Tensor::zeros(p.kernels.shape()),
            b: Tensor::zeros(p.b.shape()),
        }
    }
}

/// Backprop through a convolution layer; accumulates parameter gradients and
/// optionally produces dL/dinput.
pub fn conv2d_backward<F: Real>(
    input: &Tensor<F>,
    p: &ConvParams<F>,
    d_out: &Tensor<F>,
    grads: &mut ConvGrads<F>,
    mut d_input: Option<&mut Tensor<F>>,
    scratch: &mut Vec<F>,
) {
    let (h, w, c) = map_extent(input);
    let (kh, kw, _) = p.kernel_extent();
    let k = p.num_kernels();
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    debug_assert_eq!(d_out.shape(), [oh, ow, k]);
    let klen = kh * kw * c;
    scratch.resize(2 * klen, F::zero());
    let (window, wsum) = scratch.split_at_mut(klen);
    if let Some(di) = d_input.as_deref_mut() {
        di.fill(F::zero());
    }
    let kernels = p.kernels.data();
    let do_data = d_out.data();
    for y in 0..oh {
        for x in 0..ow {
            gather_window(input, y, x, kh, kw, window);
            let src = (y * ow + x) * k;
            wsum.iter_mut().for_each(|v| *v = F::zero());
            for ki in 0..k {
                let g = do_data[src + ki];
                if g == F::zero() {
                    continue;
                }
                axpy(g, window, &mut grads.kernels.data_mut()[ki * klen..(ki + 1) * klen]);
                grads.b.data_mut()[ki] += g;
                if d_input.is_some() {
                    axpy(g, &kernels[ki * klen..(ki + 1) * klen], wsum);
                }
            }
            if let Some(di) = d_input.as_deref_mut() {
                // Scatter the window-shaped gradient back into the input.
                let row = kw * c;
                let data = di.data_mut();
                for ky in 0..kh {
                    let dst = (y + ky) * w * c + x * c;
                    for i in 0..row {
                        data[dst + i] += wsum[ky * row + i];
                    }
                }
            }
        }
    }
}

/// 2x2 stride-2 max pooling. Input sides must be even; odd sides are a
/// configuration error, not silent truncation.
///
/// Returns the pooled maps and the flat input index of each window maximum
/// (ties resolved to the first element in row-major scan order).
pub fn maxpool_forward<F: Real>(input: &Tensor<F>) -> Result<(Tensor<F>, Vec<u32>)> {
    let (h, w, c) = map_extent(input);
    if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
        return Err(CoreError::Dimension(format!(
            "maxpool 2x2/2 requires even sides >= 2, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[oh, ow, c]);
    let mut argmax = vec![0u32; oh * ow * c];
    let data = input.data();
    let out_data = out.data_mut();
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best_idx = (2 * y * w + 2 * x) * c + ch;
                let mut best = data[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = ((2 * y + dy) * w + (2 * x + dx)) * c + ch;
                    if data[idx] > best {
                        best = data[idx];
                        best_idx = idx;
                    }
                }
                let o = (y * ow + x) * c + ch;
                out_data[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes pooled gradients back to the argmax positions.
pub fn maxpool_backward<F: Real>(d_out: &Tensor<F>, argmax: &[u32], d_input: &mut Tensor<F>) {
    d_input.fill(F::zero());
    let di = d_input.data_mut();
    for (g, &idx) in d_out.data().iter().zip(argmax.iter()) {
        di[idx as usize] += *g;
    }
}

/// Numerically stable softmax: max-subtraction is unconditional, so the
/// output is invariant to additive shifts and never overflows.
pub fn softmax_forward<F: Real>(z: &[F], out: &mut [F]) {
    debug_assert_eq!(z.len(), out.len());
    let mut m = z[0];
    for &v in &z[1..] {
        if v > m {
            m = v;
        }
    }
    let mut sum = F::zero();
    for (o, &v) in out.iter_mut().zip(z.iter()) {
        let e = (v - m).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

/// Inverted dropout. In training mode each unit is zeroed with probability
/// `1 - keep` and survivors are scaled by `1/keep`; in inference mode the
/// input passes through unchanged. Returns the applied scale mask when
/// training.
pub fn dropout_forward<F: Real, R: Rng>(
    x: &mut [F],
    keep: f64,
    training: bool,
    rng: &mut R,
) -> Result<Option<Vec<F>>> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(CoreError::Parameter(format!(
            "dropout keep probability must be in (0, 1], got {keep}"
        )));
    }
    if !training || keep == 1.0 {
        return Ok(None);
    }
    let scale = F::cast_from(1.0 / keep);
    let mut mask = vec![F::zero(); x.len()];
    for (v, m) in x.iter_mut().zip(mask.iter_mut()) {
        if rng.random::<f64>() < keep {
            *m = scale;
            *v = *v * scale;
        } else {
            *m = F::zero();
            *v = F::zero();
        }
    }
    Ok(Some(mask))
}

/// Backprop through dropout given the mask returned by the forward pass.
pub fn dropout_backward<F: Real>(d_out: &mut [F], mask: Option<&[F]>) {
    if let Some(mask) = mask {
        for (g, &m) in d_out.iter_mut().zip(mask.iter()) {
            *g = *g * m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_sigmoid_at_zero_is_half() {
        let p = DenseParams {
            w: Tensor::from_vec(&[1, 1], vec![1.0f64]).unwrap(),
            b: Tensor::from_vec(&[1], vec![0.0]).unwrap(),
        };
        let mut out = [0.0];
        dense_forward(&[0.0], &p, None, Activation::Sigmoid, &mut out).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dense_relu_identity_weights() {
        let p = DenseParams {
            w: Tensor::from_vec(&[2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap(),
            b: Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap(),
        };
        let mut out = [0.0; 2];
        dense_forward(&[1.0, 2.0], &p, None, Activation::Relu, &mut out).unwrap();
        assert_eq!(out, [1.0, 2.0]);
    }

    #[test]
    fn dense_extent_mismatch_is_error() {
        let p = DenseParams::<f64>::zeros(2, 3);
        let mut out = [0.0; 2];
        assert!(dense_forward(&[0.0; 4], &p, None, Activation::Identity, &mut out).is_err());
    }

    #[test]
    fn conv_ones_sums_window() {
        let input = Tensor::from_vec(&[3, 3, 1], vec![1.0f64; 9]).unwrap();
        let p = ConvParams {
            kernels: Tensor::from_vec(&[1, 2, 2, 1], vec![1.0; 4]).unwrap(),
            b: Tensor::zeros(&[1]),
        };
        let mut out = Tensor::zeros(&[2, 2, 1]);
        conv2d_forward(&input, &p, &mut out, &mut Vec::new()).unwrap();
        assert!(out.data().iter().all(|&v| (v - 4.0f64).abs() < 1e-15));
    }

    #[test]
    fn conv_kernel_too_large_is_error() {
        let input = Tensor::<f64>::zeros(&[3, 3, 1]);
        let p = ConvParams::<f64>::zeros(1, 4, 4, 1);
        let mut out = Tensor::zeros(&[1, 1, 1]);
        assert!(conv2d_forward(&input, &p, &mut out, &mut Vec::new()).is_err());
    }

    #[test]
    fn conv_depth_mismatch_is_error() {
        let input = Tensor::<f64>::zeros(&[4, 4, 2]);
        let p = ConvParams::<f64>::zeros(1, 2, 2, 3);
        let mut out = Tensor::zeros(&[3, 3, 1]);
        assert!(conv2d_forward(&input, &p, &mut out, &mut Vec::new()).is_err());
    }

    #[test]
    fn maxpool_single_window() {
        let input = Tensor::from_vec(&[2, 2, 1], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (out, argmax) = maxpool_forward(&input).unwrap();
        assert_eq!(out.shape(), [1, 1, 1]);
        assert_eq!(out.data()[0], 4.0);
        assert_eq!(argmax[0], 3);
    }

    #[test]
    fn maxpool_rejects_odd_and_degenerate_sides() {
        assert!(maxpool_forward(&Tensor::<f64>::zeros(&[3, 4, 1])).is_err());
        assert!(maxpool_forward(&Tensor::<f64>::zeros(&[1, 1, 1])).is_err());
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let mut out = [0.0f64; 2];
        softmax_forward(&[0.0, 0.0], &mut out);
        assert!((out[0] - 0.5).abs() < 1e-15 && (out[1] - 0.5).abs() < 1e-15);
        softmax_forward(&[1000.0, 1000.0], &mut out);
        assert!(out.iter().all(|v| v.is_finite()));
        assert!((out[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dropout_keep_one_and_inference_are_identity() {
        let mut rng = crate::rng::stream(1, "dropout-test", 0);
        let mut x = [1.0f32, 2.0, 3.0];
        let m = dropout_forward(&mut x, 1.0, true, &mut rng).unwrap();
        assert!(m.is_none());
        assert_eq!(x, [1.0, 2.0, 3.0]);
        let m = dropout_forward(&mut x, 0.4, false, &mut rng).unwrap();
        assert!(m.is_none());
        assert_eq!(x, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = crate::rng::stream(11, "dropout-mc", 0);
        let n = 1_000_000usize;
        let mut x = vec![1.0f64; n];
        dropout_forward(&mut x, 0.5, true, &mut rng).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }
}
