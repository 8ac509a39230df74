//! From-scratch neural network core: tensors, differentiable layer
//! primitives, cross-entropy loss with L2 penalty, SGD with momentum, and a
//! finite-difference gradient checker.
//!
//! Everything is generic over [`Real`] so the gradient-check suite can run
//! in 64-bit while production training runs in 32-bit.

pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use loss::cross_entropy_loss;
pub use ops::{Activation, ConvParams, DenseParams};
pub use optim::{SgdMomentum, TrainConfig};
pub use tensor::{Real, Tensor};
