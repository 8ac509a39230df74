//! Supervised CNN training: balanced raw-patch sampling, He initialization,
//! SGD with momentum, dropout on the fully connected layers, and early
//! stopping on validation F1 with the best-epoch parameters retained.

use super::{CnnArch, CnnGrads, CnnModel};
use crate::error::{CoreError, Result};
use crate::metadata::PixelMeta;
use crate::msmlp::pyramid::gather_window_zero;
use crate::msmlp::train::{instance_f1, EpochStats, TrainedModelLog};
use crate::msmlp::FRUIT_CLASS;
use crate::nn::{Real, SgdMomentum, Tensor, TrainConfig};
use crate::rng;
use crate::sampling::{sample_balanced, LabeledScene};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug)]
pub struct CnnTrainOptions {
    pub arch: CnnArch,
    pub cfg: TrainConfig,
    pub n_instances: usize,
    pub val_instances: usize,
    /// Early-stopping patience in epochs without validation-F1 improvement;
    /// `None` trains to the epoch budget.
    pub patience: Option<usize>,
}

impl CnnTrainOptions {
    pub fn new(arch: CnnArch, cfg: TrainConfig, n_instances: usize) -> Self {
        CnnTrainOptions {
            arch,
            cfg,
            n_instances,
            val_instances: 2_000,
            patience: Some(10),
        }
    }
}

/// Extracts the `side x side x 3` window centered at `(y, x)` with
/// zero-filled borders.
pub fn extract_patch<F: Real>(image: &crate::raster::Image, y: usize, x: usize, side: usize) -> Tensor<F> {
    let mut data = vec![F::zero(); side * side * 3];
    gather_window_zero(image, y as i64, x as i64, side, &mut data);
    Tensor::from_vec(&[side, side, 3], data).expect("sized above")
}

pub(crate) struct Instance {
    pub patch: Tensor<f32>,
    pub d: Option<Vec<f32>>,
    pub label: usize,
}

fn collect_instances(
    scenes: &[LabeledScene],
    arch: &CnnArch,
    n: usize,
    seed: u64,
) -> Result<Vec<Instance>> {
    let mut sample_rng = rng::stream(seed, "cnn-sample", 0);
    let samples = sample_balanced(scenes, n, &mut sample_rng)?;
    let metas: Vec<Option<PixelMeta>> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            arch.metadata.as_ref().map(|spec| PixelMeta {
                spec: spec.clone(),
                r_n: s.row_id,
                s_psi: s.sun_azimuth,
                noise_seed: rng::derive_seed(seed, "noise", i as u64),
            })
        })
        .collect();
    samples
        .par_iter()
        .map(|s| {
            let patch = extract_patch::<f32>(&scenes[s.scene].image, s.y, s.x, arch.input_side);
            let d = match &metas[s.scene] {
                Some(pm) => Some(pm.encode_at::<f32>(s.y, s.x)?),
                None => None,
            };
            Ok(Instance {
                patch,
                d,
                label: if s.fruit { FRUIT_CLASS } else { 1 - FRUIT_CLASS },
            })
        })
        .collect()
}

fn he_init(model: &mut CnnModel<f32>, seed: u64) {
    let mut rng = rng::stream(seed, "cnn-init", 0);
    for conv in &mut model.convs {
        let (kh, kw, cin) = conv.kernel_extent();
        let std = (2.0 / (kh * kw * cin) as f64).sqrt();
        let dist = Normal::new(0.0, std).unwrap();
        for v in conv.kernels.data_mut() {
            *v = dist.sample(&mut rng) as f32;
        }
    }
    for fc in &mut model.fcs {
        let std = (2.0 / fc.in_dim() as f64).sqrt();
        let dist = Normal::new(0.0, std).unwrap();
        for v in fc.w.data_mut() {
            *v = dist.sample(&mut rng) as f32;
        }
    }
    let dist = Normal::new(0.0, 0.01).unwrap();
    for v in model.softmax.w.data_mut() {
        *v = dist.sample(&mut rng) as f32;
    }
    // Metadata weights start at zero: the term is a learned bias shift.
}

pub(crate) fn predict_instances(model: &CnnModel<f32>, instances: &[Instance]) -> Vec<f32> {
    instances
        .par_iter()
        .map(|inst| {
            model
                .forward(&inst.patch, inst.d.as_deref())
                .map(|p| p.cast_f64() as f32)
                .unwrap_or(f32::NAN)
        })
        .collect()
}

/// Trains the CNN on pixel-labeled scenes. No unsupervised pretraining is
/// used; dropout is active on the fully connected layers during training.
pub fn train_cnn(
    train_scenes: &[LabeledScene],
    val_scenes: &[LabeledScene],
    opts: &CnnTrainOptions,
) -> Result<(CnnModel<f32>, TrainedModelLog)> {
    opts.arch.validate()?;
    opts.cfg.validate()?;
    if train_scenes.is_empty() {
        return Err(CoreError::Sampling("no training scenes".into()));
    }
    let seed = opts.cfg.seed;
    let mut model = CnnModel::<f32>::zeroed(opts.arch.clone())?;
    he_init(&mut model, seed);

    let instances = collect_instances(
        train_scenes,
        &opts.arch,
        opts.n_instances,
        rng::derive_seed(seed, "cnn-train-instances", 0),
    )?;
    let (val, val_labels) = if val_scenes.is_empty() || opts.val_instances == 0 {
        (Vec::new(), Vec::new())
    } else {
        let v = collect_instances(
            val_scenes,
            &opts.arch,
            opts.val_instances,
            rng::derive_seed(seed, "cnn-val-instances", 0),
        )?;
        let labels = v.iter().map(|i| i.label).collect();
        (v, labels)
    };

    let mut opt = SgdMomentum::<f32>::new(&model.param_sizes(), opts.cfg.momentum);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut log = TrainedModelLog::default();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut since_best = 0usize;

    for epoch in 0..opts.cfg.epochs {
        let lr = opts.cfg.learning_rate_at(epoch);
        let mut shuffle = rng::stream(seed, "cnn-epoch-shuffle", epoch as u64);
        for i in (1..order.len()).rev() {
            let j = shuffle.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for batch in order.chunks(opts.cfg.batch_size) {
            let chunk_results: Vec<(CnnGrads<f32>, f64)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grads = CnnGrads::zeros_like(&model);
                    let mut loss = 0.0f64;
                    for &idx in chunk {
                        let inst = &instances[idx];
                        // Per-instance dropout stream: independent of thread
                        // count and batch partitioning.
                        let mut drop_rng = rng::stream(
                            seed,
                            "cnn-dropout",
                            (epoch * instances.len() + idx) as u64,
                        );
                        let dropout = if opts.cfg.dropout_keep < 1.0 {
                            Some((opts.cfg.dropout_keep, &mut drop_rng))
                        } else {
                            None
                        };
                        let tape = model
                            .forward_tape(&inst.patch, inst.d.as_deref(), dropout)
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
            let mut grads: Option<CnnGrads<f32>> = None;
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
            seen += batch.len();

            let grad_slices = grads.grad_slices();
            let mut params = model.param_slices_mut();
            opt.step(&mut params, &grad_slices, lr);
        }
        model.check_finite()?;
        let l2_term =
            opts.cfg.l2 * crate::nn::loss::l2_weight_norm(&model.weight_tensors()).cast_f64();
        let val_f1 = if val.is_empty() {
            f64::NAN
        } else {
            let probs = predict_instances(&model, &val);
            instance_f1(&probs, &val_labels, 0.5)
        };
        log.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / seen.max(1) as f64 + l2_term,
            val_f1,
        });

        if !val.is_empty() {
            let improved = best.as_ref().map(|(b, _, _)| val_f1 > *b).unwrap_or(true);
            if improved {
                best = Some((val_f1, epoch, model.flat_params()));
                since_best = 0;
            } else {
                since_best += 1;
                if let Some(patience) = opts.patience {
                    if since_best >= patience {
                        break;
                    }
                }
            }
        }
    }

    if let Some((_, epoch, params)) = best {
        model.set_flat_params(&params);
        log.best_epoch = Some(epoch);
    }
    Ok((model, log))
}
