//! Supervised training of the multi-scale MLP: ZCA fit, per-scale DAE
//! pretraining, sparse initialization of the deeper layers, then SGD with
//! momentum over balanced pixel instances.

use super::pyramid::{build_pyramid, Pyramid};
use super::{extract_multiscale_patch, MsMlpArch, MsMlpGrads, MsMlpModel, FRUIT_CLASS};
use crate::error::{CoreError, Result};
use crate::metadata::PixelMeta;
use crate::nn::ops::DenseParams;
use crate::nn::{Real, SgdMomentum, TrainConfig};
use crate::pretrain::{dae_train, sparse_init, zca_fit, DaeConfig, ZcaTransform};
use crate::rng;
use crate::sampling::{sample_balanced, LabeledScene};
use rand::Rng;
use rayon::prelude::*;

/// Instances processed per gradient-accumulation chunk. Chunks are summed
/// in index order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct MsMlpTrainOptions {
    pub arch: MsMlpArch,
    /// Dropout keep-probability is ignored here: the multi-scale MLP is
    /// regularized by the L2 penalty and pretraining instead.
    pub cfg: TrainConfig,
    /// Balanced training instances to sample.
    pub n_instances: usize,
    pub dae: DaeConfig,
    pub zca_epsilon: f64,
    /// Patches used to fit each per-scale ZCA transform.
    pub zca_fit_count: usize,
    /// Held-out patches per scale for DAE pretraining.
    pub pretrain_count: usize,
    /// Nonzero incoming weights per unit for deeper layers.
    pub sparse_k: usize,
    pub sparse_std: f64,
    /// Balanced validation instances for the per-epoch F1 monitor.
    pub val_instances: usize,
}

impl MsMlpTrainOptions {
    pub fn new(arch: MsMlpArch, cfg: TrainConfig, n_instances: usize) -> Self {
        MsMlpTrainOptions {
            arch,
            cfg,
            n_instances,
            dae: DaeConfig::default(),
            zca_epsilon: 0.1,
            zca_fit_count: 10_000,
            pretrain_count: 8_000,
            sparse_k: 15,
            sparse_std: 1.0,
            val_instances: 2_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_f1: f64,
}

/// Per-run training record, written to the CLI log and stored as provenance.
#[derive(Clone, Debug, Default)]
pub struct TrainedModelLog {
    pub epochs: Vec<EpochStats>,
    /// Held-out DAE reconstruction error per scale: (initial, final).
    pub pretrain_recon: Vec<(f64, f64)>,
    /// Epoch whose parameters the returned model carries (early stopping).
    pub best_epoch: Option<usize>,
}

pub(crate) struct Instance {
    pub whitened: Vec<Vec<f32>>,
    pub d: Option<Vec<f32>>,
    pub label: usize,
}

fn pixel_meta_for(scene: &LabeledScene, arch: &MsMlpArch, seed: u64, scene_idx: usize) -> Option<PixelMeta> {
    arch.metadata.as_ref().map(|spec| PixelMeta {
        spec: spec.clone(),
        r_n: scene.row_id,
        s_psi: scene.sun_azimuth,
        noise_seed: rng::derive_seed(seed, "noise", scene_idx as u64),
    })
}

/// Patch-level F1 of the fruit class at the given probability threshold.
pub(crate) fn instance_f1(probs: &[f32], labels: &[usize], threshold: f32) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &l) in probs.iter().zip(labels.iter()) {
        let pred = p >= threshold;
        let truth = l == FRUIT_CLASS;
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

fn collect_instances(
    scenes: &[LabeledScene],
    pyramids: &[Pyramid],
    model_zca: &[ZcaTransform],
    arch: &MsMlpArch,
    n: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<Instance>> {
    let mut sample_rng = rng::stream(seed, label, 0);
    let samples = sample_balanced(scenes, n, &mut sample_rng)?;
    let metas: Vec<Option<PixelMeta>> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| pixel_meta_for(s, arch, seed, i))
        .collect();
    samples
        .par_iter()
        .map(|s| {
            let patch = extract_multiscale_patch::<f32>(&pyramids[s.scene], s.y, s.x, arch.patch_side);
            let whitened: Vec<Vec<f32>> = patch
                .windows
                .iter()
                .zip(model_zca.iter())
                .map(|(w, z)| z.apply_vec(w))
                .collect();
            let d = match &metas[s.scene] {
                Some(pm) => Some(pm.encode_at::<f32>(s.y, s.x)?),
                None => None,
            };
            Ok(Instance {
                whitened,
                d,
                label: if s.fruit { FRUIT_CLASS } else { 1 - FRUIT_CLASS },
            })
        })
        .collect()
}

pub(crate) fn predict_instances(model: &MsMlpModel<f32>, instances: &[Instance]) -> Vec<f32> {
    instances
        .par_iter()
        .map(|inst| {
            model
                .forward_whitened(&inst.whitened, inst.d.as_deref())
                .map(|t| t.probs[FRUIT_CLASS])
                .unwrap_or(f32::NAN)
        })
        .collect()
}

/// Trains a multi-scale MLP on pixel-labeled scenes.
///
/// The per-scale first layers are initialized by denoising autoencoders
/// trained on held-out (validation-scene) patches; deeper layers use sparse
/// Gaussian initialization. Training runs to the epoch budget.
pub fn train_msmlp(
    train_scenes: &[LabeledScene],
    val_scenes: &[LabeledScene],
    opts: &MsMlpTrainOptions,
) -> Result<(MsMlpModel<f32>, TrainedModelLog)> {
    opts.arch.validate()?;
    opts.cfg.validate()?;
    if train_scenes.is_empty() {
        return Err(CoreError::Sampling("no training scenes".into()));
    }
    let arch = &opts.arch;
    let seed = opts.cfg.seed;

    let train_pyramids: Vec<Pyramid> = train_scenes
        .par_iter()
        .map(|s| build_pyramid(&s.image, &arch.scales))
        .collect::<Result<_>>()?;
    let val_pyramids: Vec<Pyramid> = val_scenes
        .par_iter()
        .map(|s| build_pyramid(&s.image, &arch.scales))
        .collect::<Result<_>>()?;

    // Per-scale ZCA transforms fitted on training patches (uniform pixels;
    // whitening is unsupervised).
    let mut zca_rng = rng::stream(seed, "zca-sample", 0);
    let mut zca_patches: Vec<Vec<Vec<f32>>> = vec![Vec::new(); arch.num_scales()];
    for _ in 0..opts.zca_fit_count {
        let si = zca_rng.random_range(0..train_scenes.len());
        let y = zca_rng.random_range(0..train_scenes[si].image.height());
        let x = zca_rng.random_range(0..train_scenes[si].image.width());
        let patch = extract_multiscale_patch::<f32>(&train_pyramids[si], y, x, arch.patch_side);
        for (s, w) in patch.windows.into_iter().enumerate() {
            zca_patches[s].push(w);
        }
    }
    let zca: Vec<ZcaTransform> = zca_patches
        .par_iter()
        .map(|patches| zca_fit(patches, opts.zca_epsilon))
        .collect::<Result<_>>()?;

    // DAE pretraining on held-out patches (validation scenes when present).
    let (held_scenes, held_pyramids) = if val_scenes.is_empty() {
        (train_scenes, &train_pyramids)
    } else {
        (val_scenes, &val_pyramids)
    };
    let mut pre_rng = rng::stream(seed, "pretrain-sample", 0);
    let mut pre_patches: Vec<Vec<Vec<f32>>> = vec![Vec::new(); arch.num_scales()];
    for _ in 0..opts.pretrain_count {
        let si = pre_rng.random_range(0..held_scenes.len());
        let y = pre_rng.random_range(0..held_scenes[si].image.height());
        let x = pre_rng.random_range(0..held_scenes[si].image.width());
        let patch = extract_multiscale_patch::<f32>(&held_pyramids[si], y, x, arch.patch_side);
        for (s, w) in patch.windows.into_iter().enumerate() {
            pre_patches[s].push(zca[s].apply_vec(&w));
        }
    }
    let mut model = MsMlpModel::<f32>::zeroed(arch.clone(), zca)?;
    let mut log = TrainedModelLog::default();
    let dae_out: Vec<_> = pre_patches
        .par_iter()
        .enumerate()
        .map(|(s, patches)| {
            let cfg = DaeConfig {
                hidden: arch.scale_hidden,
                seed: rng::derive_seed(seed, "dae", s as u64),
                ..opts.dae.clone()
            };
            dae_train::<f32>(patches, &cfg)
        })
        .collect::<Result<_>>()?;
    for (s, filters) in dae_out.into_iter().enumerate() {
        log.pretrain_recon.push((filters.initial_loss, filters.final_loss));
        model.scale_layers[s] = filters.encoder;
    }

    // Sparse initialization for the dense stack and softmax layer.
    let mut init_rng = rng::stream(seed, "sparse-init", 0);
    for li in 0..model.dense.len() {
        let (out_dim, in_dim) = (model.dense[li].out_dim(), model.dense[li].in_dim());
        model.dense[li] = DenseParams {
            w: sparse_init(out_dim, in_dim, opts.sparse_k.min(in_dim), opts.sparse_std, &mut init_rng)?,
            b: crate::nn::Tensor::zeros(&[out_dim]),
        };
    }
    {
        let (out_dim, in_dim) = (model.softmax.out_dim(), model.softmax.in_dim());
        model.softmax = DenseParams {
            w: sparse_init(out_dim, in_dim, opts.sparse_k.min(in_dim), opts.sparse_std, &mut init_rng)?,
            b: crate::nn::Tensor::zeros(&[out_dim]),
        };
    }

    let instances = collect_instances(
        train_scenes,
        &train_pyramids,
        &model.zca,
        arch,
        opts.n_instances,
        rng::derive_seed(seed, "train-instances", 0),
        "train-sample",
    )?;
    let (val_instances, val_labels) = if val_scenes.is_empty() || opts.val_instances == 0 {
        (Vec::new(), Vec::new())
    } else {
        let v = collect_instances(
            val_scenes,
            &val_pyramids,
            &model.zca,
            arch,
            opts.val_instances,
            rng::derive_seed(seed, "val-instances", 0),
            "val-sample",
        )?;
        let labels: Vec<usize> = v.iter().map(|i| i.label).collect();
        (v, labels)
    };

    let mut opt = SgdMomentum::<f32>::new(&model.param_sizes(), opts.cfg.momentum);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for epoch in 0..opts.cfg.epochs {
        let lr = opts.cfg.learning_rate_at(epoch);
        let mut shuffle = rng::stream(seed, "epoch-shuffle", epoch as u64);
        for i in (1..order.len()).rev() {
            let j = shuffle.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0f64;
        let mut loss_count = 0usize;
        for batch in order.chunks(opts.cfg.batch_size) {
            let chunk_results: Vec<(MsMlpGrads<f32>, f64)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grads = MsMlpGrads::zeros_like(&model);
                    let mut loss = 0.0f64;
                    for &idx in chunk {
                        let inst = &instances[idx];
                        let tape = model
                            .forward_whitened(&inst.whitened, inst.d.as_deref())
                            .expect("geometry validated");
                        loss += model
                            .loss(&tape, inst.label, 0.0)
                            .expect("label valid")
                            .cast_f64();
                        model.backward(&tape, inst.label, &mut grads);
                    }
                    (grads, loss)
                })
                .collect();
            let mut grads: Option<MsMlpGrads<f32>> = None;
            for (g, l) in chunk_results {
                loss_sum += l;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => acc.add_assign(&g),
                }
            }
            let mut grads = grads.expect("non-empty batch");
            grads.scale_by(1.0 / batch.len() as f32);
            grads.add_l2(&model, opts.cfg.l2);
            loss_count += batch.len();

            let grad_slices = grads.grad_slices();
            let mut params = model.param_slices_mut();
            opt.step(&mut params, &grad_slices, lr);
        }
        model.check_finite()?;
        let l2_term = opts.cfg.l2
            * crate::nn::loss::l2_weight_norm(&model.weight_tensors()).cast_f64();
        let val_f1 = if val_instances.is_empty() {
            f64::NAN
        } else {
            let probs = predict_instances(&model, &val_instances);
            instance_f1(&probs, &val_labels, 0.5)
        };
        log.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / loss_count.max(1) as f64 + l2_term,
            val_f1,
        });
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{BinaryMask, Image};

    /// Two-class separable toy scene: bright disk-ish blocks on dark ground.
    fn toy_scene(seed: u64) -> LabeledScene {
        let mut r = rng::stream(seed, "toy-scene", 0);
        let (h, w) = (48, 48);
        let mut image = Image::new(h, w);
        let mut mask = BinaryMask::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let v = 0.2 + 0.1 * r.random::<f32>();
                image.set_pixel(y, x, [v * 0.5, v, v * 0.4]);
            }
        }
        for _ in 0..4 {
            let cy = r.random_range(8..h - 8) as i64;
            let cx = r.random_range(8..w - 8) as i64;
            for dy in -5i64..=5 {
                for dx in -5i64..=5 {
                    if dy * dy + dx * dx <= 25 {
                        let (y, x) = ((cy + dy) as usize, (cx + dx) as usize);
                        image.set_pixel(y, x, [0.9, 0.25, 0.2]);
                        mask.set(y, x, true);
                    }
                }
            }
        }
        LabeledScene {
            image,
            mask,
            row_id: 0,
            sun_azimuth: 90.0,
        }
    }

    #[test]
    fn loss_decreases_on_separable_toy_set() {
        let train: Vec<LabeledScene> = (0..6).map(toy_scene).collect();
        let val: Vec<LabeledScene> = (100..102).map(toy_scene).collect();
        let arch = MsMlpArch {
            scales: vec![1.0, 0.5],
            patch_side: 8,
            scale_hidden: 24,
            dense_widths: vec![16],
            metadata: None,
        };
        let cfg = TrainConfig {
            learning_rate: 0.1,
            lr_end: 0.05,
            momentum: 0.9,
            l2: 1e-5,
            epochs: 5,
            batch_size: 32,
            seed: 42,
            ..TrainConfig::default()
        };
        let mut opts = MsMlpTrainOptions::new(arch, cfg, 1500);
        opts.zca_fit_count = 1500;
        opts.pretrain_count = 800;
        opts.dae.epochs = 3;
        opts.val_instances = 400;
        let (_, log) = train_msmlp(&train, &val, &opts).unwrap();
        let losses: Vec<f64> = log.epochs.iter().map(|e| e.train_loss).collect();
        for k in 1..losses.len() {
            assert!(
                losses[k] < losses[k - 1],
                "loss not monotonically decreasing: {losses:?}"
            );
        }
    }
}
