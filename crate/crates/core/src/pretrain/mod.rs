//! Unsupervised pretraining: ZCA whitening of input patches, first-layer
//! filter learning with a sparse denoising autoencoder, and the sparse
//! Gaussian initialization used for deeper layers.

mod dae;
mod init;
mod zca;

pub use dae::{dae_train, DaeConfig, DaeFilters};
pub use init::sparse_init;
pub use zca::{zca_fit, ZcaTransform};
