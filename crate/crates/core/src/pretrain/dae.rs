//! Denoising autoencoder with a KL sparsity penalty, used to pre-learn the
//! first-layer filters of the multi-scale MLP on whitened patches.
//!
//! Corruption is masking noise (inputs zeroed with probability `corruption`);
//! the encoder is sigmoid, the decoder linear and untied, and the sparsity
//! penalty is `KL(target || mean hidden activation)` per hidden unit.

use crate::error::{CoreError, Result};
use crate::nn::ops::{dense_forward, Activation, DenseParams};
use crate::nn::tensor::{axpy, Real};
use crate::nn::Tensor;
use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DaeConfig {
    /// Probability of zeroing each input unit, in [0, 1).
    pub corruption: f64,
    /// Weight of the KL sparsity penalty (>= 0).
    pub sparsity_weight: f64,
    /// Target mean activation in (0, 1).
    pub sparsity_target: f64,
    /// Hidden layer width.
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DaeConfig {
    fn default() -> Self {
        DaeConfig {
            corruption: 0.3,
            sparsity_weight: 0.1,
            sparsity_target: 0.05,
            hidden: 200,
            epochs: 10,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl DaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.corruption) {
            return Err(CoreError::Parameter("DAE corruption must be in [0, 1)".into()));
        }
        if self.sparsity_weight < 0.0 {
            return Err(CoreError::Parameter("sparsity weight must be >= 0".into()));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(CoreError::Parameter("sparsity target must be in (0, 1)".into()));
        }
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(CoreError::Parameter("hidden size and batch must be positive".into()));
        }
        Ok(())
    }
}

/// Learned first-layer filters plus the held-out reconstruction curve ends.
#[derive(Clone, Debug)]
pub struct DaeFilters<F> {
    /// Encoder weights `[hidden, dim]` and biases `[hidden]`.
    pub encoder: DenseParams<F>,
    /// Mean held-out reconstruction error before training.
    pub initial_loss: f64,
    /// Mean held-out reconstruction error after the final epoch.
    pub final_loss: f64,
}

fn reconstruction_loss<F: Real>(
    enc: &DenseParams<F>,
    dec: &DenseParams<F>,
    patches: &[Vec<F>],
) -> f64 {
    let mut h = vec![F::zero(); enc.out_dim()];
    let mut xhat = vec![F::zero(); dec.out_dim()];
    let mut total = 0.0f64;
    for p in patches {
        dense_forward(p, enc, None, Activation::Sigmoid, &mut h).unwrap();
        dense_forward(&h, dec, None, Activation::Identity, &mut xhat).unwrap();
        let mut e = 0.0f64;
        for (a, b) in xhat.iter().zip(p.iter()) {
            let d = a.cast_f64() - b.cast_f64();
            e += d * d;
        }
        total += 0.5 * e;
    }
    total / patches.len().max(1) as f64
}

/// Trains one denoising autoencoder and returns the encoder as first-layer
/// filters. The last tenth of `patches` is held out for the reconstruction
/// curve; zero epochs return the initialization unchanged.
pub fn dae_train<F: Real>(patches: &[Vec<F>], cfg: &DaeConfig) -> Result<DaeFilters<F>> {
    cfg.validate()?;
    if patches.is_empty() {
        return Err(CoreError::Parameter("DAE training needs patches".into()));
    }
    let dim = patches[0].len();
    if patches.iter().any(|p| p.len() != dim) {
        return Err(CoreError::Dimension("inconsistent patch lengths".into()));
    }
    let held = (patches.len() / 10).max(1).min(patches.len() - 1).max(1);
    let (train, heldout) = patches.split_at(patches.len() - held);
    let train = if train.is_empty() { patches } else { train };

    let mut rng = rng::stream(cfg.seed, "dae-init", 0);
    let normal = Normal::new(0.0, 0.01).unwrap();
    let mut enc = DenseParams::<F> {
        w: Tensor::zeros(&[cfg.hidden, dim]),
        b: Tensor::zeros(&[cfg.hidden]),
    };
    for v in enc.w.data_mut() {
        *v = F::cast_from(normal.sample(&mut rng));
    }
    let mut dec = DenseParams::<F> {
        w: Tensor::zeros(&[dim, cfg.hidden]),
        b: Tensor::zeros(&[dim]),
    };
    for v in dec.w.data_mut() {
        *v = F::cast_from(normal.sample(&mut rng));
    }

    let initial_loss = reconstruction_loss(&enc, &dec, heldout);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut corrupted = vec![F::zero(); dim];
    let lr = F::cast_from(cfg.learning_rate);
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = rng::stream(cfg.seed, "dae-shuffle", epoch as u64);
        // Fisher-Yates with the epoch stream.
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut noise_rng = rng::stream(cfg.seed, "dae-noise", epoch as u64);

        for batch in order.chunks(cfg.batch_size) {
            // Forward the whole batch, caching activations for the shared
            // sparsity term.
            let mut hs: Vec<Vec<F>> = Vec::with_capacity(batch.len());
            let mut xhats: Vec<Vec<F>> = Vec::with_capacity(batch.len());
            let mut corrupted_batch: Vec<Vec<F>> = Vec::with_capacity(batch.len());
            for &idx in batch {
                let x = &train[idx];
                for (c, &v) in corrupted.iter_mut().zip(x.iter()) {
                    *c = if cfg.corruption > 0.0 && noise_rng.random::<f64>() < cfg.corruption {
                        F::zero()
                    } else {
                        v
                    };
                }
                let mut h = vec![F::zero(); cfg.hidden];
                dense_forward(&corrupted, &enc, None, Activation::Sigmoid, &mut h)?;
                let mut xhat = vec![F::zero(); dim];
                dense_forward(&h, &dec, None, Activation::Identity, &mut xhat)?;
                corrupted_batch.push(corrupted.clone());
                hs.push(h);
                xhats.push(xhat);
            }

            // Batch-mean activation for the KL penalty, clamped away from
            // the logarithm poles.
            let bn = batch.len() as f64;
            let mut rho_hat = vec![0.0f64; cfg.hidden];
            for h in &hs {
                for (r, &v) in rho_hat.iter_mut().zip(h.iter()) {
                    *r += v.cast_f64();
                }
            }
            rho_hat
                .iter_mut()
                .for_each(|r| *r = (*r / bn).clamp(1e-6, 1.0 - 1e-6));
            let rho = cfg.sparsity_target;
            let sparsity_dh: Vec<F> = rho_hat
                .iter()
                .map(|&rh| {
                    F::cast_from(cfg.sparsity_weight * (-rho / rh + (1.0 - rho) / (1.0 - rh)) / bn)
                })
                .collect();

            let mut g_enc_w = Tensor::<F>::zeros(&[cfg.hidden, dim]);
            let mut g_enc_b = Tensor::<F>::zeros(&[cfg.hidden]);
            let mut g_dec_w = Tensor::<F>::zeros(&[dim, cfg.hidden]);
            let mut g_dec_b = Tensor::<F>::zeros(&[dim]);
            let scale = F::cast_from(1.0 / bn);
            let mut dh = vec![F::zero(); cfg.hidden];
            for (bi, &idx) in batch.iter().enumerate() {
                let x = &train[idx];
                let h = &hs[bi];
                let xhat = &xhats[bi];
                let xin = &corrupted_batch[bi];
                // d(0.5 ||xhat - x||^2)/dxhat = xhat - x
                for (j, dzj) in xhat.iter().zip(x.iter()).map(|(&a, &b)| a - b).enumerate() {
                    if dzj != F::zero() {
                        axpy(
                            dzj * scale,
                            h,
                            &mut g_dec_w.data_mut()[j * cfg.hidden..(j + 1) * cfg.hidden],
                        );
                        g_dec_b.data_mut()[j] += dzj * scale;
                    }
                }
                // dL/dh = W_dec^T (xhat - x) + sparsity term
                for (jh, dhj) in dh.iter_mut().enumerate() {
                    let mut acc = F::zero();
                    for j in 0..dim {
                        acc += dec.w.data()[j * cfg.hidden + jh] * (xhat[j] - x[j]);
                    }
                    *dhj = acc * scale + sparsity_dh[jh];
                }
                // Through the sigmoid into encoder params.
                for jh in 0..cfg.hidden {
                    let dz = dh[jh] * h[jh] * (F::one() - h[jh]);
                    if dz != F::zero() {
                        axpy(dz, xin, &mut g_enc_w.data_mut()[jh * dim..(jh + 1) * dim]);
                        g_enc_b.data_mut()[jh] += dz;
                    }
                }
            }

            for (p, g) in [
                (enc.w.data_mut(), g_enc_w.data()),
                (enc.b.data_mut(), g_enc_b.data()),
                (dec.w.data_mut(), g_dec_w.data()),
                (dec.b.data_mut(), g_dec_b.data()),
            ] {
                for (pv, &gv) in p.iter_mut().zip(g.iter()) {
                    *pv -= lr * gv;
                }
            }
        }
    }

    let final_loss = reconstruction_loss(&enc, &dec, heldout);
    enc.w.check_finite("DAE encoder weights")?;
    Ok(DaeFilters {
        encoder: enc,
        initial_loss,
        final_loss,
    })
}
