use super::{load_dataset, write_summary};
use anyhow::{Context, Result};
use clap::Args;
use orchard_core::evaluate::yield_error_percent;
use orchard_core::io::{dataset::read_detections, tables};
use orchard_core::yieldmap::{
    accumulate_rows, calibrate_linear, rasterize_yield, roi_count, select_frames, YieldRaster,
};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

#[derive(Args, Debug)]
pub struct YieldmapArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Detection table for the split being accumulated (usually `all`).
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frame downselection spacing along the row, meters.
    #[arg(long, default_value_t = 0.5)]
    pub spacing: f64,
    /// Yield raster cell size, meters.
    #[arg(long, default_value_t = 1.0)]
    pub cell_size: f64,
}

#[derive(serde::Serialize)]
struct RowYieldRow {
    row_id: usize,
    algorithm_count: u64,
    true_count: Option<u64>,
    calibrated: Option<f64>,
}

fn write_ascii_grid(path: &Path, raster: &YieldRaster) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("ncols {}\n", raster.width));
    text.push_str(&format!("nrows {}\n", raster.height));
    text.push_str(&format!("xllcorner {}\n", raster.origin.0));
    text.push_str(&format!("yllcorner {}\n", raster.origin.1));
    text.push_str(&format!("cellsize {}\n", raster.cell_size));
    text.push_str(&format!("NODATA_value {}\n", raster.no_data));
    // ASCII grids list rows north to south; row 0 is the southernmost.
    for iy in (0..raster.height).rev() {
        let row: Vec<String> = (0..raster.width)
            .map(|ix| format!("{:.3}", raster.get(iy, ix)))
            .collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    orchard_core::io::atomic_write(path, text.as_bytes())?;
    Ok(())
}

pub fn run(args: YieldmapArgs) -> Result<()> {
    let ds = load_dataset(&args.dataset)?;
    let groups = read_detections(&args.detections)
        .with_context(|| format!("reading {}", args.detections.display()))?;
    let by_id: HashMap<&str, &Vec<orchard_core::detect::Detection>> =
        groups.iter().map(|(id, d)| (id.as_str(), d)).collect();
    let roi = ds.descriptor.roi;

    let kept = select_frames(&ds.poses, args.spacing)?;
    let empty = Vec::new();
    let mut frame_counts: Vec<(String, u64)> = Vec::new();
    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &kept {
        let pose = &ds.poses[i];
        let dets = by_id.get(pose.image_id.as_str()).copied().unwrap_or(&empty);
        let count = roi_count(dets, &roi);
        frame_counts.push((pose.image_id.clone(), count));
        samples.push((pose.easting, pose.northing, count as f64));
    }
    let frame_rows: HashMap<String, usize> = ds
        .poses
        .iter()
        .map(|p| (p.image_id.clone(), p.row_id))
        .collect();
    let mut rows = accumulate_rows(&frame_counts, &frame_rows)?;

    let truth_map: HashMap<usize, u64> = ds.row_truths.iter().copied().collect();
    for r in rows.iter_mut() {
        r.true_count = truth_map.get(&r.row_id).copied();
    }
    let cal = calibrate_linear(&mut rows)?;
    let (est, truth): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.true_count.map(|t| (r.calibrated.unwrap_or(0.0), t as f64)))
        .unzip();
    let err = yield_error_percent(&est, &truth)?;

    std::fs::create_dir_all(&args.out)?;
    let yield_rows: Vec<RowYieldRow> = rows
        .iter()
        .map(|r| RowYieldRow {
            row_id: r.row_id,
            algorithm_count: r.algorithm_count,
            true_count: r.true_count,
            calibrated: r.calibrated,
        })
        .collect();
    tables::write_csv(&args.out.join("row_yields.csv"), &yield_rows)?;
    let raster = rasterize_yield(&samples, args.cell_size)?;
    write_ascii_grid(&args.out.join("yield_map.asc"), &raster)?;
    write_summary(
        &args.out.join("fit_summary.txt"),
        &[
            ("frames_kept", format!("{}", kept.len())),
            ("rows", format!("{}", rows.len())),
            ("slope", format!("{:.6}", cal.slope)),
            ("intercept", format!("{:.6}", cal.intercept)),
            ("r_squared", format!("{:.6}", cal.r_squared)),
            ("yield_error_percent", format!("{err:.4}")),
        ],
    )?;
    println!(
        "yieldmap: {} rows, r^2 {:.4}, yield error {:.2}% -> {}",
        rows.len(),
        cal.r_squared,
        err,
        args.out.display()
    );
    Ok(())
}
