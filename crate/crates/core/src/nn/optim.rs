//! Stochastic gradient descent with momentum and a linearly decaying
//! learning rate.

use super::tensor::Real;
use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Supervised training configuration shared by both architectures.
///
/// The momentum, minibatch and decay-endpoint defaults are exposed
/// configuration, not asserted constants.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    /// Initial learning rate (> 0).
    pub learning_rate: f64,
    /// Linear decay endpoint (> 0, <= learning_rate).
    pub lr_end: f64,
    /// Momentum coefficient in [0, 1).
    pub momentum: f64,
    /// L2 penalty weight (>= 0).
    pub l2: f64,
    /// Dropout keep-probability in (0, 1]; 1 disables dropout.
    pub dropout_keep: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            lr_end: 0.001,
            momentum: 0.9,
            l2: 1e-4,
            dropout_keep: 1.0,
            epochs: 10,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::Parameter("learning rate must be positive".into()));
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.learning_rate) {
            return Err(CoreError::Parameter(
                "decay endpoint must be positive and <= initial learning rate".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::Parameter("momentum must be in [0, 1)".into()));
        }
        if self.l2 < 0.0 {
            return Err(CoreError::Parameter("L2 penalty must be nonnegative".into()));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(CoreError::Parameter("dropout keep must be in (0, 1]".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::Parameter(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate at the given epoch: linear interpolation from the
    /// initial rate toward the endpoint across the epoch budget.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let t = epoch as f64 / self.epochs as f64;
        self.learning_rate + (self.lr_end - self.learning_rate) * t
    }
}

/// Momentum optimizer. Velocity buffers are part of the optimizer state
/// (zero at construction) and are never serialized with models.
pub struct SgdMomentum<F> {
    velocities: Vec<Vec<F>>,
    momentum: f64,
}

impl<F: Real> SgdMomentum<F> {
    /// `sizes` lists the flat length of every parameter tensor, in the order
    /// `step` receives them.
    pub fn new(sizes: &[usize], momentum: f64) -> Self {
        SgdMomentum {
            velocities: sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            momentum,
        }
    }

    /// `v <- mu v - eta g;  w <- w + v` for every parameter tensor.
    pub fn step(&mut self, params: &mut [&mut [F]], grads: &[&[F]], learning_rate: f64) {
        assert_eq!(params.len(), self.velocities.len());
        assert_eq!(grads.len(), self.velocities.len());
        let mu = F::cast_from(self.momentum);
        let eta = F::cast_from(learning_rate);
        for ((p, g), v) in params.iter_mut().zip(grads.iter()).zip(self.velocities.iter_mut()) {
            assert_eq!(p.len(), v.len());
            assert_eq!(g.len(), v.len());
            for i in 0..v.len() {
                v[i] = mu * v[i] - eta * g[i];
                p[i] += v[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_step() {
        let mut opt = SgdMomentum::<f64>::new(&[1], 0.0);
        let mut w = vec![0.0];
        opt.step(&mut [&mut w], &[&[1.0]], 0.1);
        assert!((w[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = SgdMomentum::<f64>::new(&[1], 0.9);
        let mut w = vec![0.0];
        opt.step(&mut [&mut w], &[&[1.0]], 0.1);
        opt.step(&mut [&mut w], &[&[1.0]], 0.1);
        // v1 = -0.1, v2 = -0.19, w = -0.29
        assert!((w[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn linear_decay_schedule() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            lr_end: 0.01,
            epochs: 10,
            ..TrainConfig::default()
        };
        assert!((cfg.learning_rate_at(5) - 0.055).abs() < 1e-12);
        assert!((cfg.learning_rate_at(0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut cfg = TrainConfig::default();
        cfg.lr_end = cfg.learning_rate * 2.0;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
