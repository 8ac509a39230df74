use super::{load_dataset, write_summary};
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use orchard_core::detect::filter_boundary;
use orchard_core::evaluate::{match_detections, pixel_prf, r_squared, PixelScore};
use orchard_core::io::{dataset::read_detections, png, tables, SplitName};
use std::path::PathBuf;

#[derive(Subcommand, Debug)]
pub enum EvaluateCommand {
    /// Pixel-wise precision/recall/F1 of probability maps.
    Pixel(PixelArgs),
    /// Detection-level precision/recall/F1 via greedy one-to-one matching.
    Detection(DetectionArgs),
    /// Per-image count regression (r-squared of detections vs annotations).
    Count(DetectionArgs),
}

#[derive(Args, Debug)]
pub struct PixelArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub probmaps: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
    pub split: String,
    /// Fixed threshold; when absent the threshold is selected on the
    /// validation-split maps.
    #[arg(long)]
    pub threshold: Option<f32>,
    /// Border band masked out during scoring, in pixels.
    #[arg(long, default_value_t = 4)]
    pub border_margin: usize,
}

#[derive(Args, Debug)]
pub struct DetectionArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Detection table written by `detect`.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
    pub split: String,
    /// Ground-truth circles with centers this close to the border are
    /// excluded, mirroring the boundary filter applied to detections.
    #[arg(long, default_value_t = 10.0)]
    pub boundary_margin: f64,
}

#[derive(serde::Serialize)]
struct PixelScoreRow {
    image_id: String,
    tp: u64,
    fp: u64,
    tn: u64,
    fn_: u64,
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(serde::Serialize)]
struct DetScoreRow {
    image_id: String,
    tp: usize,
    fp: usize,
    fn_: usize,
    detections: usize,
    annotations: usize,
}

pub fn run(cmd: EvaluateCommand) -> Result<()> {
    match cmd {
        EvaluateCommand::Pixel(args) => pixel(args),
        EvaluateCommand::Detection(args) => detection(args, true),
        EvaluateCommand::Count(args) => detection(args, false),
    }
}

fn pixel(args: PixelArgs) -> Result<()> {
    let ds = load_dataset(&args.dataset)?;
    let split = SplitName::parse(&args.split)?;
    let threshold = match args.threshold {
        Some(t) => t,
        None => {
            let t = super::detect::auto_threshold(&ds, &args.probmaps)?;
            println!("evaluate pixel: validation-selected threshold {t:.2}");
            t
        }
    };
    std::fs::create_dir_all(&args.out)?;
    let mut rows = Vec::new();
    let mut pooled = (0u64, 0u64, 0u64, 0u64);
    for &idx in &ds.split(split) {
        let item = &ds.items[idx];
        let map = png::read_probmap(&args.probmaps.join(format!("{}.png", item.image_id)))
            .with_context(|| format!("probability map for {}", item.image_id))?;
        let mask = png::read_mask(&ds.mask_path(&item.image_id))?;
        let s = pixel_prf(&map, &mask, threshold, args.border_margin)?;
        pooled.0 += s.tp;
        pooled.1 += s.fp;
        pooled.2 += s.tn;
        pooled.3 += s.fn_;
        rows.push(PixelScoreRow {
            image_id: item.image_id.clone(),
            tp: s.tp,
            fp: s.fp,
            tn: s.tn,
            fn_: s.fn_,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        });
    }
    let total = PixelScore::from_counts(pooled.0, pooled.1, pooled.2, pooled.3);
    tables::write_csv(&args.out.join("pixel_scores.csv"), &rows)?;
    write_summary(
        &args.out.join("pixel_summary.txt"),
        &[
            ("split", args.split.clone()),
            ("threshold", format!("{threshold}")),
            ("border_margin", format!("{}", args.border_margin)),
            ("images", format!("{}", rows.len())),
            ("precision", format!("{:.6}", total.precision)),
            ("recall", format!("{:.6}", total.recall)),
            ("f1", format!("{:.6}", total.f1)),
        ],
    )?;
    println!(
        "evaluate pixel ({}): P {:.4} R {:.4} F1 {:.4}",
        args.split, total.precision, total.recall, total.f1
    );
    Ok(())
}

fn detection(args: DetectionArgs, prf_mode: bool) -> Result<()> {
    let ds = load_dataset(&args.dataset)?;
    let split = SplitName::parse(&args.split)?;
    let groups = read_detections(&args.detections)?;
    let by_id: std::collections::HashMap<&str, &Vec<orchard_core::detect::Detection>> =
        groups.iter().map(|(id, d)| (id.as_str(), d)).collect();
    std::fs::create_dir_all(&args.out)?;
    let (h, w) = (ds.descriptor.image_height, ds.descriptor.image_width);

    let empty = Vec::new();
    let mut rows = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut est_counts = Vec::new();
    let mut true_counts = Vec::new();
    for &idx in &ds.split(split) {
        let item = &ds.items[idx];
        let dets = by_id.get(item.image_id.as_str()).copied().unwrap_or(&empty);
        let truths = filter_boundary(
            ds.annotations_for(&item.image_id),
            args.boundary_margin,
            h,
            w,
        );
        let m = match_detections(dets, &truths);
        tp += m.tp();
        fp += m.fp();
        fn_ += m.fn_();
        est_counts.push(dets.len() as f64);
        true_counts.push(truths.len() as f64);
        rows.push(DetScoreRow {
            image_id: item.image_id.clone(),
            tp: m.tp(),
            fp: m.fp(),
            fn_: m.fn_(),
            detections: dets.len(),
            annotations: truths.len(),
        });
    }

    if prf_mode {
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        tables::write_csv(&args.out.join("detection_scores.csv"), &rows)?;
        write_summary(
            &args.out.join("detection_summary.txt"),
            &[
                ("split", args.split.clone()),
                ("images", format!("{}", rows.len())),
                ("tp", format!("{tp}")),
                ("fp", format!("{fp}")),
                ("fn", format!("{fn_}")),
                ("precision", format!("{precision:.6}")),
                ("recall", format!("{recall:.6}")),
                ("f1", format!("{f1:.6}")),
            ],
        )?;
        println!(
            "evaluate detection ({}): P {:.4} R {:.4} F1 {:.4}",
            args.split, precision, recall, f1
        );
    } else {
        let r2 = r_squared(&est_counts, &true_counts)?;
        tables::write_csv(&args.out.join("count_scores.csv"), &rows)?;
        write_summary(
            &args.out.join("count_summary.txt"),
            &[
                ("split", args.split.clone()),
                ("images", format!("{}", rows.len())),
                ("r_squared", format!("{r2:.6}")),
            ],
        )?;
        println!("evaluate count ({}): r^2 {:.4}", args.split, r2);
    }
    Ok(())
}
