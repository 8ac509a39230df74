//! Orchard image processing: pixel-wise fruit segmentation with neural
//! networks trained from scratch, individual fruit detection, and yield
//! estimation/mapping.
//!
//! The pipeline stages are:
//!
//! 1. **synthgen** – deterministic synthetic-orchard scene generator with
//!    per-pixel ground truth, circle annotations, metadata and row counts.
//! 2. **nn / pretrain** – tensor container, differentiable layers, losses,
//!    SGD with momentum, finite-difference gradient checking, ZCA whitening,
//!    denoising-autoencoder pretraining and sparse initialization.
//! 3. **msmlp / cnn** – multi-scale MLP and patch CNN classifiers with
//!    optional one-hot metadata injection, plus whole-image inference
//!    (convolutional rewriting and shift-and-stitch).
//! 4. **detect** – thresholding, morphology, Euclidean distance transform,
//!    watershed and circular Hough transform fruit detectors.
//! 5. **evaluate / yieldmap** – pixel and detection scoring, greedy
//!    one-to-one matching, count regression, per-row calibration and
//!    bilinear yield rasters.
//! 6. **io** – dataset layout, model serialization and delimited tables
//!    consumed by the `orchard` CLI.

pub mod cnn;
pub mod detect;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod metadata;
pub mod msmlp;
pub mod nn;
pub mod pretrain;
pub mod raster;
pub mod rng;
pub mod sampling;
pub mod synthgen;
pub mod yieldmap;

pub use error::{CoreError, Result};
pub use raster::{BinaryMask, Image, ProbMap};
