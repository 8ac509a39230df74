//! Whole-image CNN inference by input shifting and output interlacing.
//!
//! The network downsamples by `f` (the product of pooling strides), so one
//! convolutional pass labels every `f`-th pixel. Shifting the zero-padded
//! input by every offset in `{0..f-1}^2` yields `f^2` downsampled maps that
//! interlace into a full-resolution output, each prediction landing at the
//! center of its receptive field.
//!
//! Every pass runs the same conv/pool/dense kernels as the patch path (the
//! fully connected layers act as convolutions via window gathering), so the
//! stitched output is bit-identical to per-pixel sliding-window forward.

use super::CnnModel;
use crate::error::{CoreError, Result};
use crate::metadata::{DTable, PixelMeta};
use crate::msmlp::FRUIT_CLASS;
use crate::nn::ops::{
    conv2d_forward, dense_forward, gather_window, maxpool_forward, softmax_forward, Activation,
};
use crate::nn::tensor::dot;
use crate::nn::{Real, Tensor};
use crate::raster::{Image, ProbMap};
use rayon::prelude::*;

/// The `f^2` shift offsets, row-major.
pub fn shift_grid(f: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(f * f);
    for dy in 0..f {
        for dx in 0..f {
            out.push((dy, dx));
        }
    }
    out
}

/// `U D` cache for the fully connected metadata layer.
struct MetaCache<F> {
    table: DTable<F>,
    ud: Vec<Vec<F>>,
}

impl<F: Real> MetaCache<F> {
    fn build(model: &CnnModel<F>, meta: &PixelMeta) -> Result<Self> {
        let u = model.meta_weights.as_ref().expect("metadata-enabled model");
        let width = u.shape()[0];
        let dlen = u.shape()[1];
        let table = DTable::<F>::build(meta)?;
        let ud = table
            .vectors()
            .iter()
            .map(|d| {
                (0..width)
                    .map(|j| dot(&u.data()[j * dlen..(j + 1) * dlen], d))
                    .collect()
            })
            .collect();
        Ok(MetaCache { table, ud })
    }

    #[inline]
    fn get(&self, bins: (usize, usize, usize)) -> &[F] {
        &self.ud[self.table.index(bins)]
    }
}

struct ShiftResult {
    dy: usize,
    dx: usize,
    n_r: usize,
    n_c: usize,
    probs: Vec<f32>,
}

/// Whole-image fruit probability map via shift-and-stitch; output extents
/// equal input extents and every pixel is written exactly once.
pub fn cnn_infer_image<F: Real>(
    model: &CnnModel<F>,
    image: &Image,
    meta: Option<&PixelMeta>,
) -> Result<ProbMap> {
    match (model.arch.metadata_enabled(), meta) {
        (true, Some(m)) => {
            if m.spec != *model.arch.metadata.as_ref().unwrap() {
                return Err(CoreError::Config(
                    "pixel metadata encoder spec differs from the model's".into(),
                ));
            }
        }
        (false, None) => {}
        (true, None) => {
            return Err(CoreError::Config(
                "model is metadata-enabled but no pixel metadata was supplied".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(CoreError::Config(
                "model is metadata-disabled but pixel metadata was supplied".into(),
            ))
        }
    }
    let (h, w) = (image.height(), image.width());
    if h == 0 || w == 0 {
        return Err(CoreError::Dimension("empty image".into()));
    }
    let rf = model.arch.input_side;
    let f = model.geom.downsample;
    let off = rf / 2;
    let cache = match meta {
        Some(m) => Some(MetaCache::build(model, m)?),
        None => None,
    };

    let results: Vec<ShiftResult> = shift_grid(f)
        .into_par_iter()
        .map(|(dy, dx)| run_shift(model, image, meta, cache.as_ref(), dy, dx, off))
        .collect::<Result<_>>()?;

    // Interlace: prediction (u, v) of shift (dy, dx) lands at pixel
    // (dy + f*u, dx + f*v). The coverage bitmap enforces the exactly-once
    // contract.
    let mut out = ProbMap::new(h, w);
    let mut coverage = vec![0u8; h * w];
    for r in results {
        for u in 0..r.n_r {
            for v in 0..r.n_c {
                let (y, x) = (r.dy + f * u, r.dx + f * v);
                coverage[y * w + x] += 1;
                out.set(y, x, r.probs[u * r.n_c + v]);
            }
        }
    }
    if coverage.iter().any(|&c| c != 1) {
        return Err(CoreError::Numeric(
            "shift-and-stitch interlace did not cover every pixel exactly once".into(),
        ));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_shift<F: Real>(
    model: &CnnModel<F>,
    image: &Image,
    meta: Option<&PixelMeta>,
    cache: Option<&MetaCache<F>>,
    dy: usize,
    dx: usize,
    off: usize,
) -> Result<ShiftResult> {
    let (h, w) = (image.height(), image.width());
    let rf = model.arch.input_side;
    let f = model.geom.downsample;
    let n_r = (h - dy).div_ceil(f);
    let n_c = (w - dx).div_ceil(f);
    // Input extent such that the conv/pool chain emits exactly n outputs;
    // every pooling stage then sees even sides.
    let x_r = f * n_r + (rf - f);
    let x_c = f * n_c + (rf - f);

    let mut input = Tensor::<F>::zeros(&[x_r, x_c, 3]);
    {
        let data = input.data_mut();
        for y in 0..x_r {
            let sy = dy as i64 + y as i64 - off as i64;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for x in 0..x_c {
                let sx = dx as i64 + x as i64 - off as i64;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                let p = image.pixel(sy as usize, sx as usize);
                let base = (y * x_c + x) * 3;
                data[base] = F::cast_from(f64::from(p[0]));
                data[base + 1] = F::cast_from(f64::from(p[1]));
                data[base + 2] = F::cast_from(f64::from(p[2]));
            }
        }
    }

    // Convolutional trunk, identical kernels to the patch path.
    let mut scratch = Vec::new();
    let mut maps = input;
    for (bi, conv) in model.convs.iter().enumerate() {
        let k = model.arch.conv_blocks[bi].kernel_side;
        let (mh, mw) = (maps.shape()[0], maps.shape()[1]);
        let mut out = Tensor::zeros(&[mh - k + 1, mw - k + 1, conv.num_kernels()]);
        conv2d_forward(&maps, conv, &mut out, &mut scratch)?;
        for v in out.data_mut() {
            if *v < F::zero() {
                *v = F::zero();
            }
        }
        let (pooled, _) = maxpool_forward(&out)?;
        maps = pooled;
    }
    let fs = model.geom.final_side;
    debug_assert_eq!(maps.shape()[0], n_r + fs - 1);
    debug_assert_eq!(maps.shape()[1], n_c + fs - 1);

    // Fully connected layers as convolutions: gather each final-map window
    // and run the same dense kernels.
    let mut probs_out = vec![0.0f32; n_r * n_c];
    let mut window = vec![F::zero(); model.geom.flat_dim];
    let mut fc_buf: Vec<Vec<F>> = model.fcs.iter().map(|l| vec![F::zero(); l.out_dim()]).collect();
    let mut logits = vec![F::zero(); 2];
    let mut probs = vec![F::zero(); 2];
    for u in 0..n_r {
        for v in 0..n_c {
            gather_window(&maps, u, v, fs, fs, &mut window);
            for (fi, fc) in model.fcs.iter().enumerate() {
                let (head, tail) = fc_buf.split_at_mut(fi);
                let input: &[F] = if fi == 0 { &window } else { &head[fi - 1] };
                if fi == model.arch.meta_fc_index {
                    if let Some(cache) = cache {
                        // z = (W x + b) + cached U d, then ReLU — the same
                        // accumulation order as the patch path.
                        dense_forward(input, fc, None, Activation::Identity, &mut tail[0])?;
                        let pixel = (dy + f * u, dx + f * v);
                        let bins = DTable::<F>::bins_at(meta.unwrap(), pixel.0, pixel.1)?;
                        let ud = cache.get(bins);
                        for (z, &uv) in tail[0].iter_mut().zip(ud.iter()) {
                            *z = Activation::Relu.apply(*z + uv);
                        }
                        continue;
                    }
                }
                dense_forward(input, fc, None, Activation::Relu, &mut tail[0])?;
            }
            dense_forward(
                fc_buf.last().unwrap(),
                &model.softmax,
                None,
                Activation::Identity,
                &mut logits,
            )?;
            softmax_forward(&logits, &mut probs);
            probs_out[u * n_c + v] = probs[FRUIT_CLASS].cast_f64() as f32;
        }
    }
    Ok(ShiftResult {
        dy,
        dx,
        n_r,
        n_c,
        probs: probs_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::train::extract_patch;
    use crate::cnn::{CnnArch, ConvBlockSpec};
    use rand::Rng;

    fn small_arch(meta: Option<crate::metadata::EncoderSpec>) -> CnnArch {
        CnnArch {
            input_side: 14,
            conv_blocks: vec![
                ConvBlockSpec { kernels: 4, kernel_side: 3 },
                ConvBlockSpec { kernels: 6, kernel_side: 3 },
            ],
            fc_widths: vec![10, 8],
            metadata: meta,
            meta_fc_index: 0,
        }
    }

    fn random_model(arch: CnnArch, seed: u64) -> CnnModel<f32> {
        let mut model = CnnModel::<f32>::zeroed(arch).unwrap();
        let mut rng = crate::rng::stream(seed, "ss-test-model", 0);
        for s in model.param_slices_mut() {
            for v in s.iter_mut() {
                *v = rng.random::<f32>() * 0.5 - 0.25;
            }
        }
        model
    }

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = crate::rng::stream(seed, "ss-test-image", 0);
        let mut img = Image::new(h, w);
        for v in img.data_mut() {
            *v = rng.random::<f32>();
        }
        img
    }

    #[test]
    fn shift_grid_is_f_squared() {
        assert_eq!(shift_grid(4).len(), 16);
        assert_eq!(shift_grid(2), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn stitched_output_equals_sliding_window_exactly() {
        let model = random_model(small_arch(None), 5);
        // Non-multiple-of-f extents exercise the ragged shift sizes.
        let img = random_image(6, 21, 26);
        let map = cnn_infer_image(&model, &img, None).unwrap();
        assert_eq!(map.height(), 21);
        assert_eq!(map.width(), 26);
        for y in 0..21 {
            for x in 0..26 {
                let patch = extract_patch::<f32>(&img, y, x, 14);
                let p = model.forward(&patch, None).unwrap();
                assert_eq!(map.get(y, x), p, "pixel ({y}, {x})");
            }
        }
    }

    #[test]
    fn stitched_output_with_metadata_equals_sliding_window() {
        let spec = crate::metadata::EncoderSpec::new(
            &[
                crate::metadata::MetaParam::PixelI,
                crate::metadata::MetaParam::RowNumber,
                crate::metadata::MetaParam::Noise,
            ],
            20,
            24,
            3,
        )
        .unwrap();
        let model = random_model(small_arch(Some(spec.clone())), 8);
        let img = random_image(9, 20, 24);
        let meta = PixelMeta {
            spec,
            r_n: 1,
            s_psi: 90.0,
            noise_seed: 13,
        };
        let map = cnn_infer_image(&model, &img, Some(&meta)).unwrap();
        for y in (0..20).step_by(3) {
            for x in (0..24).step_by(2) {
                let patch = extract_patch::<f32>(&img, y, x, 14);
                let d = meta.encode_at::<f32>(y, x).unwrap();
                let p = model.forward(&patch, Some(&d)).unwrap();
                assert_eq!(map.get(y, x), p, "pixel ({y}, {x})");
            }
        }
    }
}
