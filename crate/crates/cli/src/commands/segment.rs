use super::load_dataset;
use anyhow::{Context, Result};
use clap::Args;
use orchard_core::io::{load_model, png, NetworkModel, SplitName};
use orchard_core::metadata::PixelMeta;
use orchard_core::msmlp::UpsampleMode;
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for 16-bit grayscale probability maps.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
    pub split: String,
    /// Response up-sampling for the multi-scale MLP: `nearest` reproduces
    /// the patch model exactly; `bilinear` is the smooth alternative.
    #[arg(long, default_value = "nearest", value_parser = ["nearest", "bilinear"])]
    pub upsample: String,
    /// Seed for the per-pixel noise metadata channel (only used when the
    /// model was trained with the noise parameter).
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
}

pub fn run(args: SegmentArgs) -> Result<()> {
    let ds = load_dataset(&args.dataset)?;
    let (model, _) = load_model(&args.model).context("loading model")?;
    let split = SplitName::parse(&args.split)?;
    let indices = ds.split(split);
    let mode = match args.upsample.as_str() {
        "bilinear" => UpsampleMode::Bilinear,
        _ => UpsampleMode::NearestRound,
    };
    std::fs::create_dir_all(&args.out)?;
    let started = std::time::Instant::now();
    for (n, &idx) in indices.iter().enumerate() {
        let item = &ds.items[idx];
        let image = ds.load_image(idx)?;
        let meta = model.encoder_spec().map(|spec| PixelMeta {
            spec: spec.clone(),
            r_n: item.row_id,
            s_psi: item.sun_azimuth,
            noise_seed: orchard_core::rng::derive_seed(args.noise_seed, &item.image_id, 0),
        });
        let map = match &model {
            NetworkModel::MsMlp(m) => {
                orchard_core::msmlp::msmlp_infer_image(m, &image, meta.as_ref(), mode)?
            }
            NetworkModel::Cnn(m) => {
                orchard_core::cnn::cnn_infer_image(m, &image, meta.as_ref())?
            }
        };
        png::write_probmap(&args.out.join(format!("{}.png", item.image_id)), &map)?;
        if (n + 1) % 25 == 0 {
            println!("segment: {}/{} images", n + 1, indices.len());
        }
    }
    println!(
        "segment: {} {} images in {:.1}s -> {}",
        indices.len(),
        args.split,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}
