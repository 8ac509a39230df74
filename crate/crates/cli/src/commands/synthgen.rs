use anyhow::Result;
use clap::Args;
use orchard_core::io::write_orchard;
use orchard_core::synthgen::{generate_orchard, MetaCorrelation, OrchardSpec, SceneSpec};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct SynthgenArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Central counting band width in pixels.
    #[arg(long, default_value_t = 32)]
    pub roi_width: usize,
    /// Fruit groups per ROI band (min).
    #[arg(long, default_value_t = 1)]
    pub fruit_min: usize,
    /// Fruit groups per ROI band (max).
    #[arg(long, default_value_t = 3)]
    pub fruit_max: usize,
    #[arg(long, default_value_t = 10.0)]
    pub radius_min: f64,
    #[arg(long, default_value_t = 14.0)]
    pub radius_max: f64,
    #[arg(long, default_value_t = 0.2)]
    pub cluster_prob: f64,
    #[arg(long, default_value_t = 2)]
    pub occluders_max: usize,
    /// Per-row density multiplier range, e.g. 0.6:2.4.
    #[arg(long, default_value = "0.6:2.4")]
    pub density: String,
    /// Enable the metadata-correlated distribution (fruit probability of a
    /// blob depends on its image-height band).
    #[arg(long)]
    pub metadata_correlated: bool,
    /// Disable the vertical illumination gradient.
    #[arg(long)]
    pub flat_illumination: bool,
}

pub fn run(args: SynthgenArgs) -> Result<()> {
    let (dmin, dmax) = args
        .density
        .split_once(':')
        .and_then(|(a, b)| Some((a.parse::<f64>().ok()?, b.parse::<f64>().ok()?)))
        .ok_or_else(|| anyhow::anyhow!("--density expects MIN:MAX"))?;
    let scene = SceneSpec {
        height: args.height,
        width: args.width,
        fruit_count: (args.fruit_min, args.fruit_max),
        radius_range: (args.radius_min, args.radius_max),
        cluster_prob: args.cluster_prob,
        occluder_count: (0, args.occluders_max),
        illumination_strength: if args.flat_illumination { 0.0 } else { 0.25 },
        metadata_correlation: if args.metadata_correlated {
            Some(MetaCorrelation {
                bands: 8,
                top_prob: 0.9,
                bottom_prob: 0.2,
            })
        } else {
            None
        },
        ..SceneSpec::default()
    };
    let spec = OrchardSpec {
        scene,
        rows: args.rows,
        frames_per_row: args.frames,
        roi_width_px: args.roi_width,
        density_range: (dmin, dmax),
        ..OrchardSpec::default()
    };
    let orchard = generate_orchard(&spec, args.seed)?;
    write_orchard(&orchard, &args.out)?;
    let total_fruit: u64 = orchard.row_truths.iter().map(|&(_, c)| c).sum();
    println!(
        "synthgen: wrote {} frames over {} rows ({} fruits) to {}",
        orchard.frames.len(),
        args.rows,
        total_fruit,
        args.out.display()
    );
    Ok(())
}
