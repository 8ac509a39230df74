//! Whole-image inference for the multi-scale MLP.
//!
//! The per-scale first layers are evaluated once per pyramid position as a
//! convolution over the level (window gather + the same dense kernel used
//! by the patch path), responses are up-sampled to full resolution, and the
//! dense stack runs per pixel.
//!
//! The default up-sampling samples each response map at the rounded source
//! position `round(i*s)` — exactly the sampling the patch path performs —
//! so whole-image output reproduces the sliding-window forward bit for bit.
//! The smooth bilinear mode is available as an alternative; it blends
//! neighboring responses and is NOT patch-equivalent.

use super::pyramid::{build_pyramid, gather_window_zero, level_center, round_half_up};
use super::{MsMlpModel, FRUIT_CLASS};
use crate::error::{CoreError, Result};
use crate::metadata::{DTable, PixelMeta};
use crate::nn::ops::{dense_forward, sigmoid, softmax_forward, Activation};
use crate::nn::tensor::dot;
use crate::nn::Real;
use crate::raster::{Image, ProbMap};
use rayon::prelude::*;

/// How coarse-scale first-layer responses are brought to full resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleMode {
    /// Sample the response at `round(i*s)`; equivalent to the patch path.
    NearestRound,
    /// Bilinear interpolation of responses at the continuous position
    /// `i*s`; smoother output, not patch-equivalent.
    Bilinear,
}

/// Per-scale metadata contribution cache.
///
/// `U^s D` depends only on the active one-hot bins; the distinct `D`
/// vectors come from [`DTable`] and each product is computed once with the
/// same dot kernel the patch path uses.
struct MetaCache<F> {
    table: DTable<F>,
    /// One entry per `D` combination, holding the concatenated per-scale
    /// `U^s D` vectors (`num_scales * scale_hidden`).
    ud: Vec<Vec<F>>,
}

impl<F: Real> MetaCache<F> {
    fn build(model: &MsMlpModel<F>, meta: &PixelMeta) -> Result<Self> {
        let sh = model.arch.scale_hidden;
        let ns = model.arch.num_scales();
        let weights = model.meta_weights.as_ref().expect("metadata-enabled model");
        let table = DTable::<F>::build(meta)?;
        let dlen = meta.spec.encoded_len();
        let ud = table
            .vectors()
            .iter()
            .map(|d| {
                let mut entry = vec![F::zero(); ns * sh];
                for s in 0..ns {
                    let u = &weights[s];
                    for j in 0..sh {
                        entry[s * sh + j] = dot(&u.data()[j * dlen..(j + 1) * dlen], d);
                    }
                }
                entry
            })
            .collect();
        Ok(MetaCache { table, ud })
    }

    #[inline]
    fn get(&self, bins: (usize, usize, usize)) -> &[F] {
        &self.ud[self.table.index(bins)]
    }
}

/// Whole-image fruit probability map; output extents equal input extents.
pub fn msmlp_infer_image<F: Real>(
    model: &MsMlpModel<F>,
    image: &Image,
    meta: Option<&PixelMeta>,
    mode: UpsampleMode,
) -> Result<ProbMap> {
    let arch = &model.arch;
    match (arch.metadata_enabled(), meta) {
        (true, Some(m)) => {
            if m.spec != *arch.metadata.as_ref().unwrap() {
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
    if h < arch.patch_side || w < arch.patch_side {
        return Err(CoreError::Dimension(format!(
            "image {h}x{w} smaller than one {0}x{0} patch",
            arch.patch_side
        )));
    }
    let pyr = build_pyramid(image, &arch.scales)?;
    let sh = arch.scale_hidden;
    let ns = arch.num_scales();
    let side = arch.patch_side;
    let pdim = arch.patch_dim();

    // First-layer maps. In NearestRound mode they span every center the
    // patch path can request (up to round((H-1)*s)); pre-activations are
    // stored when something must still be added per pixel.
    let store_preact = arch.metadata_enabled() && mode == UpsampleMode::NearestRound;
    let bilinear_meta = arch.metadata_enabled() && mode == UpsampleMode::Bilinear;
    let mut maps: Vec<Vec<F>> = Vec::with_capacity(ns);
    let mut map_dims: Vec<(usize, usize)> = Vec::with_capacity(ns);
    let bilinear_cache = if bilinear_meta {
        Some(MetaCache::build(model, meta.unwrap())?)
    } else {
        None
    };
    for s in 0..ns {
        let scale = arch.scales[s];
        let (mh, mw) = match mode {
            UpsampleMode::NearestRound => (
                round_half_up((h - 1) as f64 * scale) as usize + 1,
                round_half_up((w - 1) as f64 * scale) as usize + 1,
            ),
            UpsampleMode::Bilinear => (pyr.level(s).height(), pyr.level(s).width()),
        };
        let mut map = vec![F::zero(); mh * mw * sh];
        let level = pyr.level(s);
        let layer = &model.scale_layers[s];
        let zca = &model.zca[s];
        map.par_chunks_mut(mw * sh).enumerate().for_each(|(y, row)| {
            let mut window = vec![F::zero(); pdim];
            let mut white = vec![F::zero(); pdim];
            for x in 0..mw {
                gather_window_zero(level, y as i64, x as i64, side, &mut window);
                zca.apply(&window, &mut white);
                let out = &mut row[x * sh..(x + 1) * sh];
                if store_preact {
                    dense_forward(&white, layer, None, Activation::Identity, out)
                        .expect("geometry validated");
                } else if bilinear_meta {
                    // Metadata evaluated at the level pixel's back-projected
                    // source position (smooth mode approximation).
                    let src_y = ((y as f64 / scale).round() as usize).min(h - 1);
                    let src_x = ((x as f64 / scale).round() as usize).min(w - 1);
                    let cache = bilinear_cache.as_ref().unwrap();
                    let m = meta.unwrap();
                    let bins = DTable::<F>::bins_at(m, src_y, src_x).expect("ranges validated");
                    let ud = cache.get(bins);
                    dense_forward(&white, layer, None, Activation::Identity, out)
                        .expect("geometry validated");
                    for j in 0..sh {
                        out[j] = sigmoid(out[j] + ud[s * sh + j]);
                    }
                } else {
                    dense_forward(&white, layer, None, Activation::Sigmoid, out)
                        .expect("geometry validated");
                }
            }
        });
        maps.push(map);
        map_dims.push((mh, mw));
    }

    let nearest_cache = if store_preact {
        Some(MetaCache::build(model, meta.unwrap())?)
    } else {
        None
    };

    let mut out = ProbMap::new(h, w);
    let width = w;
    out.data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .try_for_each(|(i, row)| -> Result<()> {
            let mut h1 = vec![F::zero(); ns * sh];
            let mut hidden: Vec<Vec<F>> = model
                .dense
                .iter()
                .map(|l| vec![F::zero(); l.out_dim()])
                .collect();
            let mut logits = vec![F::zero(); 2];
            let mut probs = vec![F::zero(); 2];
            for (j, out_px) in row.iter_mut().enumerate() {
                match mode {
                    UpsampleMode::NearestRound => {
                        for s in 0..ns {
                            let (_, mw) = map_dims[s];
                            let ry = level_center(i, arch.scales[s]) as usize;
                            let rx = level_center(j, arch.scales[s]) as usize;
                            let src = &maps[s][(ry * mw + rx) * sh..(ry * mw + rx + 1) * sh];
                            let dst = &mut h1[s * sh..(s + 1) * sh];
                            if let Some(cache) = &nearest_cache {
                                let m = meta.unwrap();
                                let bins = DTable::<F>::bins_at(m, i, j)?;
                                let ud = cache.get(bins);
                                for k in 0..sh {
                                    dst[k] = sigmoid(src[k] + ud[s * sh + k]);
                                }
                            } else {
                                dst.copy_from_slice(src);
                            }
                        }
                    }
                    UpsampleMode::Bilinear => {
                        for s in 0..ns {
                            let (mh, mw) = map_dims[s];
                            bilinear_sample(
                                &maps[s],
                                mh,
                                mw,
                                sh,
                                i as f64 * arch.scales[s],
                                j as f64 * arch.scales[s],
                                &mut h1[s * sh..(s + 1) * sh],
                            );
                        }
                    }
                }
                for (li, layer) in model.dense.iter().enumerate() {
                    let (head, tail) = hidden.split_at_mut(li);
                    let prev: &[F] = if li == 0 { &h1 } else { &head[li - 1] };
                    dense_forward(prev, layer, None, Activation::Sigmoid, &mut tail[0])
                        .expect("geometry validated");
                }
                let last: &[F] = hidden.last().map(|v| v.as_slice()).unwrap_or(&h1);
                dense_forward(last, &model.softmax, None, Activation::Identity, &mut logits)
                    .expect("geometry validated");
                softmax_forward(&logits, &mut probs);
                *out_px = probs[FRUIT_CLASS].cast_f64() as f32;
            }
            Ok(())
        })?;
    Ok(out)
}

fn bilinear_sample<F: Real>(
    map: &[F],
    mh: usize,
    mw: usize,
    channels: usize,
    y: f64,
    x: f64,
    out: &mut [F],
) {
    let y = y.clamp(0.0, (mh - 1) as f64);
    let x = x.clamp(0.0, (mw - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(mh - 1);
    let x1 = (x0 + 1).min(mw - 1);
    let fy = F::cast_from(y - y0 as f64);
    let fx = F::cast_from(x - x0 as f64);
    let one = F::one();
    let w00 = (one - fy) * (one - fx);
    let w01 = (one - fy) * fx;
    let w10 = fy * (one - fx);
    let w11 = fy * fx;
    let p00 = &map[(y0 * mw + x0) * channels..(y0 * mw + x0 + 1) * channels];
    let p01 = &map[(y0 * mw + x1) * channels..(y0 * mw + x1 + 1) * channels];
    let p10 = &map[(y1 * mw + x0) * channels..(y1 * mw + x0 + 1) * channels];
    let p11 = &map[(y1 * mw + x1) * channels..(y1 * mw + x1 + 1) * channels];
    for k in 0..channels {
        out[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msmlp::{extract_multiscale_patch, MsMlpArch};
    use rand::Rng;

    fn random_model(seed: u64, meta: Option<crate::metadata::EncoderSpec>) -> MsMlpModel<f32> {
        let arch = MsMlpArch {
            scales: vec![1.0, 0.5, 0.25],
            patch_side: 8,
            scale_hidden: 12,
            dense_widths: vec![10],
            metadata: meta,
        };
        let dim = arch.patch_dim();
        // Whitening fitted on random patches so the transform is non-trivial.
        let mut rng = crate::rng::stream(seed, "infer-test-zca", 0);
        let patches: Vec<Vec<f32>> = (0..dim * 2)
            .map(|_| (0..dim).map(|_| rng.random::<f32>()).collect())
            .collect();
        let zca = crate::pretrain::zca_fit(&patches, 0.1).unwrap();
        let mut model =
            MsMlpModel::<f32>::zeroed(arch, vec![zca.clone(), zca.clone(), zca]).unwrap();
        let mut prng = crate::rng::stream(seed, "infer-test-params", 0);
        for slice in model.param_slices_mut() {
            for v in slice.iter_mut() {
                *v = prng.random::<f32>() * 0.4 - 0.2;
            }
        }
        model
    }

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = crate::rng::stream(seed, "infer-test-image", 0);
        let mut img = Image::new(h, w);
        for v in img.data_mut() {
            *v = rng.random::<f32>();
        }
        img
    }

    #[test]
    fn constant_image_gives_constant_map() {
        let model = random_model(3, None);
        let mut img = Image::new(48, 52);
        for v in img.data_mut() {
            *v = 0.42;
        }
        let map = msmlp_infer_image(&model, &img, None, UpsampleMode::NearestRound).unwrap();
        // Pixels whose windows fit fully inside every pyramid level all see
        // identical content; zero-padding only reaches the outer band.
        let reference = map.get(22, 22);
        for y in 18..=26 {
            for x in 18..=30 {
                assert_eq!(map.get(y, x), reference, "pixel ({y}, {x})");
            }
        }
        assert_eq!(map.height(), 48);
        assert_eq!(map.width(), 52);
    }

    #[test]
    fn nearest_round_equals_sliding_window_everywhere() {
        let model = random_model(11, None);
        let img = random_image(12, 26, 31);
        let map = msmlp_infer_image(&model, &img, None, UpsampleMode::NearestRound).unwrap();
        let pyr = build_pyramid(&img, &model.arch.scales).unwrap();
        for y in 0..img.height() {
            for x in 0..img.width() {
                let patch = extract_multiscale_patch::<f32>(&pyr, y, x, 8);
                let p = model.forward(&patch, None).unwrap();
                assert_eq!(map.get(y, x), p, "pixel ({y}, {x})");
            }
        }
    }

    #[test]
    fn metadata_mode_equals_sliding_window() {
        let spec = crate::metadata::EncoderSpec::new(
            &[
                crate::metadata::MetaParam::PixelI,
                crate::metadata::MetaParam::PixelJ,
                crate::metadata::MetaParam::RowNumber,
                crate::metadata::MetaParam::SunAzimuth,
                crate::metadata::MetaParam::Noise,
            ],
            26,
            31,
            5,
        )
        .unwrap();
        let model = random_model(21, Some(spec.clone()));
        let img = random_image(22, 26, 31);
        let meta = PixelMeta {
            spec,
            r_n: 3,
            s_psi: -90.0,
            noise_seed: 77,
        };
        let map =
            msmlp_infer_image(&model, &img, Some(&meta), UpsampleMode::NearestRound).unwrap();
        let pyr = build_pyramid(&img, &model.arch.scales).unwrap();
        for y in (0..img.height()).step_by(3) {
            for x in (0..img.width()).step_by(2) {
                let patch = extract_multiscale_patch::<f32>(&pyr, y, x, 8);
                let d = meta.encode_at::<f32>(y, x).unwrap();
                let p = model.forward(&patch, Some(&d)).unwrap();
                assert_eq!(map.get(y, x), p, "pixel ({y}, {x})");
            }
        }
    }

    #[test]
    fn bilinear_mode_stays_close_to_patch_forward() {
        let model = random_model(31, None);
        let img = random_image(32, 24, 24);
        let map = msmlp_infer_image(&model, &img, None, UpsampleMode::Bilinear).unwrap();
        let pyr = build_pyramid(&img, &model.arch.scales).unwrap();
        let mut max_diff = 0.0f32;
        for y in 4..20 {
            for x in 4..20 {
                let patch = extract_multiscale_patch::<f32>(&pyr, y, x, 8);
                let p = model.forward(&patch, None).unwrap();
                max_diff = max_diff.max((map.get(y, x) - p).abs());
            }
        }
        // Smooth mode blends neighboring responses; it should track the
        // patch output loosely but is not equivalent.
        assert!(max_diff < 0.2, "bilinear diverged: {max_diff}");
    }
}
