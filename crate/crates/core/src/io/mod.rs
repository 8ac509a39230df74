//! Dataset layout, raster and table formats, and model serialization.
//!
//! On-disk conventions: 8-bit RGB PNG images, 8-bit 0/255 PNG masks, 16-bit
//! grayscale PNG probability maps, comma-delimited UTF-8 tables with a
//! header row, TOML descriptors, and a checksummed binary model container.
//! All writes go through a write-temp-then-rename helper.

mod atomic;
pub mod dataset;
pub mod model_file;
pub mod png;
pub mod tables;

pub use atomic::atomic_write;
pub use dataset::{load_dataset, write_orchard, Dataset, DatasetDescriptor, SplitName};
pub use model_file::{load_model, save_model, ModelProvenance, NetworkModel};
