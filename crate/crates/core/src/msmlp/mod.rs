//! Multi-scale multi-layered perceptron.
//!
//! A contextual window is extracted around each pixel at every pyramid
//! scale; per-scale first layers (with optional bias-free metadata weights)
//! feed concatenated activations through sigmoid dense layers into a
//! two-class softmax.

pub mod infer;
pub mod pyramid;
pub mod train;

pub use infer::{msmlp_infer_image, UpsampleMode};
pub use train::{train_msmlp, MsMlpTrainOptions, TrainedModelLog};

use crate::error::{CoreError, Result};
use crate::metadata::EncoderSpec;
use crate::nn::loss::{cross_entropy_loss, softmax_ce_d_logits};
use crate::nn::ops::{dense_backward, dense_forward, softmax_forward, Activation, DenseGrads, DenseParams};
use crate::nn::{Real, Tensor};
use crate::pretrain::ZcaTransform;
use pyramid::{gather_window_zero, level_center, Pyramid};
use serde::{Deserialize, Serialize};

/// Index of the fruit class in the two-way softmax.
pub const FRUIT_CLASS: usize = 1;

/// Architecture descriptor.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MsMlpArch {
    /// Pyramid scales; strictly decreasing, first = 1, dyadic.
    pub scales: Vec<f64>,
    /// Window side at every scale (pixels).
    pub patch_side: usize,
    /// First-layer width per scale.
    pub scale_hidden: usize,
    /// Widths of the sigmoid dense layers after concatenation.
    pub dense_widths: Vec<usize>,
    /// Metadata encoder; `None` disables metadata entirely.
    pub metadata: Option<EncoderSpec>,
}

impl MsMlpArch {
    /// The baseline two-hidden-layer network: per-scale 200, one dense 200.
    pub fn mlp2(metadata: Option<EncoderSpec>) -> Self {
        MsMlpArch {
            scales: vec![1.0, 0.5, 0.25, 0.125],
            patch_side: 8,
            scale_hidden: 200,
            dense_widths: vec![200],
            metadata,
        }
    }

    /// The width/depth-optimized three-hidden-layer network.
    pub fn mlp3_star(metadata: Option<EncoderSpec>) -> Self {
        MsMlpArch {
            scales: vec![1.0, 0.5, 0.25, 0.125],
            patch_side: 8,
            scale_hidden: 200,
            dense_widths: vec![200, 200],
            metadata,
        }
    }

    pub fn validate(&self) -> Result<()> {
        pyramid::validate_scales(&self.scales)?;
        if self.patch_side == 0 || self.scale_hidden == 0 {
            return Err(CoreError::Config(
                "patch side and scale width must be positive".into(),
            ));
        }
        if self.dense_widths.iter().any(|&w| w == 0) {
            return Err(CoreError::Config("dense widths must be positive".into()));
        }
        if let Some(spec) = &self.metadata {
            spec.validate()?;
            if spec.encoded_len() == 0 {
                return Err(CoreError::Config(
                    "metadata enabled with empty encoder; disable metadata instead".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    /// Flattened window length per scale.
    pub fn patch_dim(&self) -> usize {
        self.patch_side * self.patch_side * 3
    }

    /// Concatenated first-layer width.
    pub fn concat_width(&self) -> usize {
        self.scale_hidden * self.num_scales()
    }

    pub fn metadata_enabled(&self) -> bool {
        self.metadata.is_some()
    }
}

/// One raw (unwhitened) window per scale, all centered on the same source
/// pixel; flattened `[y][x][channel]`.
#[derive(Clone, Debug)]
pub struct MultiScalePatch<F> {
    pub windows: Vec<Vec<F>>,
}

/// Extracts the multi-scale windows for pixel `(i, j)`; the center at scale
/// `s` is `(round(i*s), round(j*s))` and out-of-bounds pixels are zero.
pub fn extract_multiscale_patch<F: Real>(
    pyr: &Pyramid,
    i: usize,
    j: usize,
    patch_side: usize,
) -> MultiScalePatch<F> {
    let mut windows = Vec::with_capacity(pyr.num_levels());
    for (level, &s) in pyr.levels().iter().zip(pyr.scales().iter()) {
        let mut w = vec![F::zero(); patch_side * patch_side * 3];
        gather_window_zero(level, level_center(i, s), level_center(j, s), patch_side, &mut w);
        windows.push(w);
    }
    MultiScalePatch { windows }
}

/// Trained multi-scale MLP: per-scale ZCA transforms and first layers,
/// optional per-scale metadata weights, dense stack and softmax layer.
#[derive(Clone, Debug)]
pub struct MsMlpModel<F> {
    pub arch: MsMlpArch,
    pub zca: Vec<ZcaTransform>,
    pub scale_layers: Vec<DenseParams<F>>,
    /// Per-scale `[scale_hidden, |D|]` metadata weights (Eq. U terms).
    pub meta_weights: Option<Vec<Tensor<F>>>,
    pub dense: Vec<DenseParams<F>>,
    pub softmax: DenseParams<F>,
}

impl<F: Real> MsMlpModel<F> {
    /// All-zero model with the right geometry (tests and initialization).
    pub fn zeroed(arch: MsMlpArch, zca: Vec<ZcaTransform>) -> Result<Self> {
        arch.validate()?;
        if zca.len() != arch.num_scales() {
            return Err(CoreError::Config(format!(
                "expected {} ZCA transforms (one per scale), got {}",
                arch.num_scales(),
                zca.len()
            )));
        }
        let pd = arch.patch_dim();
        if zca.iter().any(|z| z.dim() != pd) {
            return Err(CoreError::Config("ZCA dimension != patch dimension".into()));
        }
        let scale_layers = (0..arch.num_scales())
            .map(|_| DenseParams::zeros(arch.scale_hidden, pd))
            .collect();
        let meta_weights = arch.metadata.as_ref().map(|spec| {
            (0..arch.num_scales())
                .map(|_| Tensor::zeros(&[arch.scale_hidden, spec.encoded_len()]))
                .collect()
        });
        let mut dense = Vec::new();
        let mut prev = arch.concat_width();
        for &w in &arch.dense_widths {
            dense.push(DenseParams::zeros(w, prev));
            prev = w;
        }
        let softmax = DenseParams::zeros(2, prev);
        Ok(MsMlpModel {
            arch,
            zca,
            scale_layers,
            meta_weights,
            dense,
            softmax,
        })
    }

    fn check_meta(&self, d: Option<&[F]>) -> Result<()> {
        match (self.arch.metadata_enabled(), d) {
            (true, Some(d)) => {
                let want = self.arch.metadata.as_ref().unwrap().encoded_len();
                if d.len() != want {
                    return Err(CoreError::Config(format!(
                        "metadata vector length {} != encoder |D| {}",
                        d.len(),
                        want
                    )));
                }
                Ok(())
            }
            (false, None) => Ok(()),
            (true, None) => Err(CoreError::Config(
                "model is metadata-enabled but no D vector was supplied".into(),
            )),
            (false, Some(_)) => Err(CoreError::Config(
                "model is metadata-disabled but a D vector was supplied".into(),
            )),
        }
    }

    /// Whitens the raw windows with the per-scale transforms.
    pub fn whiten(&self, patch: &MultiScalePatch<F>) -> Result<Vec<Vec<F>>> {
        if patch.windows.len() != self.arch.num_scales() {
            return Err(CoreError::Dimension(format!(
                "patch has {} scales, model expects {}",
                patch.windows.len(),
                self.arch.num_scales()
            )));
        }
        Ok(patch
            .windows
            .iter()
            .zip(self.zca.iter())
            .map(|(w, z)| z.apply_vec(w))
            .collect())
    }

    /// Forward pass on pre-whitened windows; returns the full tape.
    pub fn forward_whitened(&self, whitened: &[Vec<F>], d: Option<&[F]>) -> Result<MsMlpTape<F>> {
        self.check_meta(d)?;
        let sh = self.arch.scale_hidden;
        let mut h1 = vec![F::zero(); self.arch.concat_width()];
        for (s, white) in whitened.iter().enumerate() {
            let meta = self
                .meta_weights
                .as_ref()
                .map(|mw| (&mw[s], d.expect("meta checked")));
            dense_forward(
                white,
                &self.scale_layers[s],
                meta,
                Activation::Sigmoid,
                &mut h1[s * sh..(s + 1) * sh],
            )?;
        }
        let mut hidden = Vec::with_capacity(self.dense.len());
        {
            let mut prev: &[F] = &h1;
            for layer in &self.dense {
                let mut h = vec![F::zero(); layer.out_dim()];
                dense_forward(prev, layer, None, Activation::Sigmoid, &mut h)?;
                hidden.push(h);
                prev = hidden.last().unwrap();
            }
        }
        let last: &[F] = hidden.last().map(|v| v.as_slice()).unwrap_or(&h1);
        let mut logits = vec![F::zero(); 2];
        dense_forward(last, &self.softmax, None, Activation::Identity, &mut logits)?;
        let mut probs = vec![F::zero(); 2];
        softmax_forward(&logits, &mut probs);
        Ok(MsMlpTape {
            whitened: whitened.to_vec(),
            d: d.map(|v| v.to_vec()),
            h1,
            hidden,
            probs,
        })
    }

    /// Fruit probability for a raw multi-scale patch (Eqs. for the scale
    /// layers, dense stack and softmax). `d` must be present exactly when
    /// the model is metadata-enabled.
    pub fn forward(&self, patch: &MultiScalePatch<F>, d: Option<&[F]>) -> Result<F> {
        let whitened = self.whiten(patch)?;
        let tape = self.forward_whitened(&whitened, d)?;
        Ok(tape.probs[FRUIT_CLASS])
    }

    /// Weight tensors entering the L2 penalty (biases excluded).
    pub fn weight_tensors(&self) -> Vec<&Tensor<F>> {
        let mut ws: Vec<&Tensor<F>> = self.scale_layers.iter().map(|p| &p.w).collect();
        if let Some(mw) = &self.meta_weights {
            ws.extend(mw.iter());
        }
        ws.extend(self.dense.iter().map(|p| &p.w));
        ws.push(&self.softmax.w);
        ws
    }

    /// Cross-entropy + L2 loss of a tape against its label.
    pub fn loss(&self, tape: &MsMlpTape<F>, label: usize, lambda: f64) -> Result<F> {
        cross_entropy_loss(&tape.probs, label, &self.weight_tensors(), lambda)
    }

    /// Backward pass; accumulates into `grads` (which must match geometry).
    pub fn backward(&self, tape: &MsMlpTape<F>, label: usize, grads: &mut MsMlpGrads<F>) {
        let sh = self.arch.scale_hidden;
        let mut d_logits = vec![F::zero(); 2];
        softmax_ce_d_logits(&tape.probs, label, &mut d_logits);

        let last: &[F] = tape
            .hidden
            .last()
            .map(|v| v.as_slice())
            .unwrap_or(&tape.h1);
        let mut d_prev = vec![F::zero(); last.len()];
        // Softmax layer is linear in its logits; the fused CE gradient is
        // d_logits, so the activation here is Identity (the cached-output
        // argument is unused for Identity; probs stands in).
        dense_backward(
            last,
            &tape.probs,
            &d_logits,
            &self.softmax,
            None,
            Activation::Identity,
            &mut grads.softmax,
            Some(&mut d_prev),
        );

        for li in (0..self.dense.len()).rev() {
            let input: &[F] = if li == 0 {
                &tape.h1
            } else {
                &tape.hidden[li - 1]
            };
            let mut d_in = vec![F::zero(); input.len()];
            dense_backward(
                input,
                &tape.hidden[li],
                &d_prev,
                &self.dense[li],
                None,
                Activation::Sigmoid,
                &mut grads.dense[li],
                Some(&mut d_in),
            );
            d_prev = d_in;
        }

        for s in 0..self.arch.num_scales() {
            let seg = &tape.h1[s * sh..(s + 1) * sh];
            let d_seg = &d_prev[s * sh..(s + 1) * sh];
            let meta = match (&tape.d, &mut grads.meta) {
                (Some(d), Some(gm)) => Some((d.as_slice(), &mut gm[s])),
                _ => None,
            };
            dense_backward(
                &tape.whitened[s],
                seg,
                d_seg,
                &self.scale_layers[s],
                meta,
                Activation::Sigmoid,
                &mut grads.scale[s],
                None,
            );
        }
    }

    /// Parameter tensors in their canonical flat order, used by the
    /// optimizer, serialization and the gradient checker.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for p in &mut self.scale_layers {
            out.push(p.w.data_mut());
            out.push(p.b.data_mut());
        }
        if let Some(mw) = &mut self.meta_weights {
            for u in mw {
                out.push(u.data_mut());
            }
        }
        for p in &mut self.dense {
            out.push(p.w.data_mut());
            out.push(p.b.data_mut());
        }
        out.push(self.softmax.w.data_mut());
        out.push(self.softmax.b.data_mut());
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for p in &self.scale_layers {
            out.push(p.w.len());
            out.push(p.b.len());
        }
        if let Some(mw) = &self.meta_weights {
            for u in mw {
                out.push(u.len());
            }
        }
        for p in &self.dense {
            out.push(p.w.len());
            out.push(p.b.len());
        }
        out.push(self.softmax.w.len());
        out.push(self.softmax.b.len());
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut push = |t: &Tensor<F>| out.extend(t.data().iter().map(|v| v.cast_f64()));
        for p in &self.scale_layers {
            push(&p.w);
            push(&p.b);
        }
        if let Some(mw) = &self.meta_weights {
            for u in mw {
                push(u);
            }
        }
        for p in &self.dense {
            push(&p.w);
            push(&p.b);
        }
        push(&self.softmax.w);
        push(&self.softmax.b);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for slice in self.param_slices_mut() {
            for v in slice.iter_mut() {
                *v = F::cast_from(flat[off]);
                off += 1;
            }
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    pub fn check_finite(&self) -> Result<()> {
        for w in self.weight_tensors() {
            w.check_finite("msmlp weights")?;
        }
        Ok(())
    }
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct MsMlpTape<F> {
    pub whitened: Vec<Vec<F>>,
    pub d: Option<Vec<F>>,
    pub h1: Vec<F>,
    pub hidden: Vec<Vec<F>>,
    pub probs: Vec<F>,
}

/// Gradient buffers mirroring [`MsMlpModel`].
#[derive(Clone, Debug)]
pub struct MsMlpGrads<F> {
    pub scale: Vec<DenseGrads<F>>,
    pub meta: Option<Vec<Tensor<F>>>,
    pub dense: Vec<DenseGrads<F>>,
    pub softmax: DenseGrads<F>,
}

impl<F: Real> MsMlpGrads<F> {
    pub fn zeros_like(model: &MsMlpModel<F>) -> Self {
        MsMlpGrads {
            scale: model.scale_layers.iter().map(DenseGrads::zeros_like).collect(),
            meta: model
                .meta_weights
                .as_ref()
                .map(|mw| mw.iter().map(|u| Tensor::zeros(u.shape())).collect()),
            dense: model.dense.iter().map(DenseGrads::zeros_like).collect(),
            softmax: DenseGrads::zeros_like(&model.softmax),
        }
    }

    pub fn grad_slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for g in &self.scale {
            out.push(g.w.data());
            out.push(g.b.data());
        }
        if let Some(mw) = &self.meta {
            for u in mw {
                out.push(u.data());
            }
        }
        for g in &self.dense {
            out.push(g.w.data());
            out.push(g.b.data());
        }
        out.push(self.softmax.w.data());
        out.push(self.softmax.b.data());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = Vec::new();
        for g in &mut self.scale {
            out.push(&mut g.w);
            out.push(&mut g.b);
        }
        if let Some(mw) = &mut self.meta {
            for u in mw {
                out.push(u);
            }
        }
        for g in &mut self.dense {
            out.push(&mut g.w);
            out.push(&mut g.b);
        }
        out.push(&mut self.softmax.w);
        out.push(&mut self.softmax.b);
        out
    }

    pub fn add_assign(&mut self, other: &MsMlpGrads<F>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.grad_slices()) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale_by(&mut self, f: F) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v *= f;
            }
        }
    }

    /// Adds the L2 gradient `2 lambda W` for every weight tensor.
    pub fn add_l2(&mut self, model: &MsMlpModel<F>, lambda: f64) {
        let two_lambda = F::cast_from(2.0 * lambda);
        for (gs, ws) in self.scale.iter_mut().zip(model.scale_layers.iter()) {
            crate::nn::tensor::axpy(two_lambda, ws.w.data(), gs.w.data_mut());
        }
        if let (Some(gm), Some(wm)) = (&mut self.meta, &model.meta_weights) {
            for (g, w) in gm.iter_mut().zip(wm.iter()) {
                crate::nn::tensor::axpy(two_lambda, w.data(), g.data_mut());
            }
        }
        for (gd, wd) in self.dense.iter_mut().zip(model.dense.iter()) {
            crate::nn::tensor::axpy(two_lambda, wd.w.data(), gd.w.data_mut());
        }
        crate::nn::tensor::axpy(two_lambda, model.softmax.w.data(), self.softmax.w.data_mut());
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in self.grad_slices() {
            out.extend(s.iter().map(|v| v.cast_f64()));
        }
        out
    }
}
