use super::load_dataset;
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use orchard_core::detect::{
    cht_detect, filter_boundary, morph_clean, threshold_map, watershed_detect, DetectParams,
};
use orchard_core::io::{dataset::write_detections, png, Dataset, SplitName};
use orchard_core::raster::BinaryMask;
use std::path::{Path, PathBuf};

#[derive(Subcommand, Debug)]
pub enum DetectCommand {
    /// Watershed on the distance transform (splits touching fruits).
    Ws(DetectArgs),
    /// Circular Hough transform (merges fragmented fruits).
    Cht(DetectArgs),
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory of probability maps written by `segment`.
    #[arg(long)]
    pub probmaps: PathBuf,
    /// Output detection table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
    pub split: String,
    /// Fixed binarization threshold; mutually exclusive with --auto-threshold.
    #[arg(long, conflicts_with = "auto_threshold")]
    pub threshold: Option<f32>,
    /// Pick the threshold maximizing F1 on the validation-split maps (which
    /// must exist in --probmaps).
    #[arg(long)]
    pub auto_threshold: bool,
    /// Directory for annotated overlay images.
    #[arg(long)]
    pub overlays: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub morph_radius: usize,
    #[arg(long, default_value_t = 10.0)]
    pub min_peak_dist: f64,
    #[arg(long, default_value_t = 10)]
    pub radius_min: usize,
    #[arg(long, default_value_t = 28)]
    pub radius_max: usize,
    #[arg(long, default_value_t = 0.4)]
    pub accum_threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub edge_threshold: f64,
    #[arg(long, default_value_t = 12.0)]
    pub min_center_dist: f64,
    #[arg(long, default_value_t = 1)]
    pub accum_resolution: usize,
    #[arg(long, default_value_t = 10.0)]
    pub boundary_margin: f64,
}

pub(crate) fn auto_threshold(ds: &Dataset, probmaps: &Path) -> Result<f32> {
    let mut maps = Vec::new();
    let mut masks = Vec::new();
    for &idx in &ds.val {
        let item = &ds.items[idx];
        let map_path = probmaps.join(format!("{}.png", item.image_id));
        if !map_path.exists() {
            anyhow::bail!(
                "--auto-threshold needs validation maps; missing {}",
                map_path.display()
            );
        }
        maps.push(png::read_probmap(&map_path)?);
        masks.push(png::read_mask(&ds.mask_path(&item.image_id))?);
    }
    let t = orchard_core::evaluate::select_threshold(&maps, &masks, 0)?;
    Ok(t)
}

pub fn run(cmd: DetectCommand) -> Result<()> {
    let (args, use_ws) = match cmd {
        DetectCommand::Ws(a) => (a, true),
        DetectCommand::Cht(a) => (a, false),
    };
    let ds = load_dataset(&args.dataset)?;
    let split = SplitName::parse(&args.split)?;
    let params = DetectParams {
        ws_min_peak_dist: args.min_peak_dist,
        cht_radius_min: args.radius_min,
        cht_radius_max: args.radius_max,
        cht_accum_threshold: args.accum_threshold,
        cht_edge_threshold: args.edge_threshold,
        cht_min_center_dist: args.min_center_dist,
        cht_accum_resolution: args.accum_resolution,
        morph_radius: args.morph_radius,
        boundary_margin: args.boundary_margin,
    };
    params.validate()?;
    let threshold = if args.auto_threshold {
        let t = auto_threshold(&ds, &args.probmaps)?;
        println!("detect: validation-selected threshold {t:.2}");
        t
    } else {
        args.threshold.unwrap_or(0.5)
    };

    let mut all = Vec::new();
    for &idx in &ds.split(split) {
        let item = &ds.items[idx];
        let map_path = args.probmaps.join(format!("{}.png", item.image_id));
        let map = png::read_probmap(&map_path)
            .with_context(|| format!("reading probability map {}", map_path.display()))?;
        let mask = threshold_map(&map, threshold)?;
        let cleaned = morph_clean(&mask, params.morph_radius);
        let dets = detect_on_mask(&cleaned, &params, use_ws)?;
        let dets = filter_boundary(&dets, params.boundary_margin, mask.height(), mask.width());
        if let Some(dir) = &args.overlays {
            std::fs::create_dir_all(dir)?;
            let mut overlay = ds.load_image(idx)?;
            for d in &dets {
                png::draw_circle(&mut overlay, d.row, d.col, d.radius, [0.1, 1.0, 0.1]);
            }
            png::write_image(&dir.join(format!("{}.png", item.image_id)), &overlay)?;
        }
        all.push((item.image_id.clone(), dets));
    }
    write_detections(&args.out, &all)?;
    let total: usize = all.iter().map(|(_, d)| d.len()).sum();
    println!(
        "detect ({}): {} detections over {} images -> {}",
        if use_ws { "ws" } else { "cht" },
        total,
        all.len(),
        args.out.display()
    );
    Ok(())
}

pub(crate) fn detect_on_mask(
    mask: &BinaryMask,
    params: &DetectParams,
    use_ws: bool,
) -> Result<Vec<orchard_core::detect::Detection>> {
    let dets = if use_ws {
        watershed_detect(mask, params)?
    } else {
        cht_detect(mask, params)?
    };
    Ok(dets)
}
