pub mod detect;
pub mod evaluate;
pub mod segment;
pub mod synthgen;
pub mod train;
pub mod yieldmap;

use anyhow::{Context, Result};
use orchard_core::io::Dataset;
use std::path::Path;

pub(crate) fn load_dataset(path: &Path) -> Result<Dataset> {
    orchard_core::io::load_dataset(path)
        .with_context(|| format!("loading dataset at {}", path.display()))
}

/// Writes `key = value` lines, the structured summary format shared by the
/// scoring commands.
pub(crate) fn write_summary(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    orchard_core::io::atomic_write(path, text.as_bytes())?;
    Ok(())
}
