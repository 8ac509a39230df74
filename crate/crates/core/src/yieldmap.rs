//! Yield estimation and mapping: frame downselection along rows, region-of-
//! interest counting, per-row accumulation, linear calibration against
//! harvest counts, and bilinear yield rasterization.

use crate::detect::Detection;
use crate::error::{CoreError, Result};
use crate::evaluate::{linear_fit, r_squared};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Vehicle pose at one captured frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub image_id: String,
    /// Planar position in meters.
    pub easting: f64,
    pub northing: f64,
    /// Heading in degrees (unused for distances, kept for provenance).
    pub heading: f64,
    pub row_id: usize,
}

/// Per-row counts: raw algorithm count, optional harvest truth and the
/// calibrated estimate once a fit is available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowYield {
    pub row_id: usize,
    pub algorithm_count: u64,
    pub true_count: Option<u64>,
    pub calibrated: Option<f64>,
}

/// Rectangular region of interest in image coordinates; counting is strict
/// (a center exactly on the edge is excluded).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub top: f64,
    pub left: f64,
    pub bottom: f64,
    pub right: f64,
}

impl Roi {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if !(self.top >= 0.0
            && self.left >= 0.0
            && self.bottom <= height as f64
            && self.right <= width as f64
            && self.top < self.bottom
            && self.left < self.right)
        {
            return Err(CoreError::Parameter(format!(
                "ROI {self:?} invalid for {height}x{width} image"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn contains_strict(&self, row: f64, col: f64) -> bool {
        row > self.top && row < self.bottom && col > self.left && col < self.right
    }
}

/// Greedy frame downselection: the first frame of each row is kept, then a
/// frame is kept iff its along-row arc distance (cumulative planar Euclidean
/// distance over consecutive poses) from the last kept frame is >= spacing.
///
/// Poses must be ordered in capture time within each row. Returns kept
/// indices into `poses`.
pub fn select_frames(poses: &[FramePose], spacing: f64) -> Result<Vec<usize>> {
    if spacing < 0.0 {
        return Err(CoreError::Parameter("spacing must be >= 0".into()));
    }
    if poses.iter().any(|p| !(p.easting.is_finite() && p.northing.is_finite())) {
        return Err(CoreError::Data("non-finite pose position".into()));
    }
    let mut kept = Vec::new();
    let mut current_row: Option<usize> = None;
    let mut arc_since_kept = 0.0f64;
    for (i, pose) in poses.iter().enumerate() {
        if current_row != Some(pose.row_id) {
            current_row = Some(pose.row_id);
            kept.push(i);
            arc_since_kept = 0.0;
            continue;
        }
        let prev = &poses[i - 1];
        arc_since_kept +=
            ((pose.easting - prev.easting).powi(2) + (pose.northing - prev.northing).powi(2)).sqrt();
        if arc_since_kept >= spacing {
            kept.push(i);
            arc_since_kept = 0.0;
        }
    }
    Ok(kept)
}

/// Number of detections whose center lies strictly inside the ROI.
pub fn roi_count(dets: &[Detection], roi: &Roi) -> u64 {
    dets.iter()
        .filter(|d| roi.contains_strict(d.row, d.col))
        .count() as u64
}

/// Sums frame counts per row. Every frame id must appear in the row map.
pub fn accumulate_rows(
    frame_counts: &[(String, u64)],
    frame_rows: &HashMap<String, usize>,
) -> Result<Vec<RowYield>> {
    let mut sums: HashMap<usize, u64> = HashMap::new();
    for (id, count) in frame_counts {
        let row = frame_rows
            .get(id)
            .ok_or_else(|| CoreError::Data(format!("frame '{id}' is not mapped to a row")))?;
        *sums.entry(*row).or_insert(0) += count;
    }
    let mut rows: Vec<RowYield> = sums
        .into_iter()
        .map(|(row_id, algorithm_count)| RowYield {
            row_id,
            algorithm_count,
            true_count: None,
            calibrated: None,
        })
        .collect();
    rows.sort_by_key(|r| r.row_id);
    Ok(rows)
}

/// Linear calibration `true = slope * alg + intercept` fitted on the rows
/// carrying harvest truths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCalibration {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearCalibration {
    pub fn apply(&self, algorithm_count: u64) -> f64 {
        self.slope * algorithm_count as f64 + self.intercept
    }
}

/// Fits the calibration on rows with truths and fills every row's
/// calibrated estimate. The reported r-squared comes from the same code
/// path as [`r_squared`].
pub fn calibrate_linear(rows: &mut [RowYield]) -> Result<LinearCalibration> {
    let fitted: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.true_count.map(|t| (r.algorithm_count as f64, t as f64)))
        .collect();
    if fitted.len() < 2 {
        return Err(CoreError::Fit(
            "calibration needs at least two rows with harvest truths".into(),
        ));
    }
    let alg: Vec<f64> = fitted.iter().map(|p| p.0).collect();
    let truth: Vec<f64> = fitted.iter().map(|p| p.1).collect();
    let (slope, intercept) = linear_fit(&alg, &truth)?;
    let r2 = r_squared(&alg, &truth)?;
    let cal = LinearCalibration {
        slope,
        intercept,
        r_squared: r2,
    };
    for r in rows.iter_mut() {
        r.calibrated = Some(cal.apply(r.algorithm_count));
    }
    Ok(cal)
}

/// Interpolated yield grid. Row 0 is the southernmost row (origin corner);
/// values are calibrated counts, `no_data` marks cells outside the convex
/// hull of the samples.
#[derive(Clone, Debug, PartialEq)]
pub struct YieldRaster {
    /// (easting, northing) of the grid origin (lower-left corner).
    pub origin: (f64, f64),
    pub cell_size: f64,
    pub height: usize,
    pub width: usize,
    pub no_data: f64,
    /// Row-major, row 0 = southernmost.
    pub data: Vec<f64>,
}

impl YieldRaster {
    #[inline]
    pub fn get(&self, iy: usize, ix: usize) -> f64 {
        self.data[iy * self.width + ix]
    }
}

/// Andrews monotone chain; returns the hull in counter-clockwise order.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_hull(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    if hull.len() < 3 {
        return false;
    }
    const EPS: f64 = 1e-9;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross < -EPS {
            return false;
        }
    }
    true
}

/// Linear fill of empty slots between known values along one axis.
fn interpolate_line(values: &mut [Option<f64>]) {
    let known: Vec<usize> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|_| i))
        .collect();
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 1 {
            continue;
        }
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            values[i] = Some(va + (vb - va) * t);
        }
    }
}

/// Rasterizes geo-referenced frame counts: counts are binned to grid nodes
/// (mean per node), empty nodes are filled by axis-wise linear
/// interpolation, and each cell takes the bilinear value at its center (the
/// mean of its four corner nodes). Cells whose center falls outside the
/// convex hull of the samples are `no_data`.
pub fn rasterize_yield(samples: &[(f64, f64, f64)], cell_size: f64) -> Result<YieldRaster> {
    if samples.is_empty() {
        return Err(CoreError::Data("no samples to rasterize".into()));
    }
    if !(cell_size > 0.0) {
        return Err(CoreError::Parameter("cell size must be positive".into()));
    }
    let (mut min_e, mut max_e) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_n, mut max_n) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(e, n, _) in samples {
        min_e = min_e.min(e);
        max_e = max_e.max(e);
        min_n = min_n.min(n);
        max_n = max_n.max(n);
    }
    let width = (((max_e - min_e) / cell_size).ceil() as usize).max(1);
    let height = (((max_n - min_n) / cell_size).ceil() as usize).max(1);
    let (nw, nh) = (width + 1, height + 1);

    // Bin to nearest node.
    let mut sums = vec![0.0f64; nw * nh];
    let mut counts = vec![0u32; nw * nh];
    for &(e, n, v) in samples {
        let ix = (((e - min_e) / cell_size).round() as usize).min(width);
        let iy = (((n - min_n) / cell_size).round() as usize).min(height);
        sums[iy * nw + ix] += v;
        counts[iy * nw + ix] += 1;
    }
    let mut nodes: Vec<Option<f64>> = sums
        .iter()
        .zip(counts.iter())
        .map(|(&s, &c)| if c > 0 { Some(s / f64::from(c)) } else { None })
        .collect();

    // Fill: along easting, then along northing.
    for iy in 0..nh {
        interpolate_line(&mut nodes[iy * nw..(iy + 1) * nw]);
    }
    let mut column: Vec<Option<f64>> = vec![None; nh];
    for ix in 0..nw {
        for iy in 0..nh {
            column[iy] = nodes[iy * nw + ix];
        }
        interpolate_line(&mut column);
        for iy in 0..nh {
            nodes[iy * nw + ix] = column[iy];
        }
    }

    let hull = convex_hull(&samples.iter().map(|&(e, n, _)| (e, n)).collect::<Vec<_>>());
    let no_data = -1.0f64;
    let mut data = vec![no_data; width * height];
    for iy in 0..height {
        for ix in 0..width {
            let center = (
                min_e + (ix as f64 + 0.5) * cell_size,
                min_n + (iy as f64 + 0.5) * cell_size,
            );
            if !inside_hull(&hull, center) {
                continue;
            }
            let corners = [
                nodes[iy * nw + ix],
                nodes[iy * nw + ix + 1],
                nodes[(iy + 1) * nw + ix],
                nodes[(iy + 1) * nw + ix + 1],
            ];
            if corners.iter().all(|c| c.is_some()) {
                let v = corners.iter().map(|c| c.unwrap()).sum::<f64>() / 4.0;
                data[iy * width + ix] = v.max(0.0);
            }
        }
    }
    Ok(YieldRaster {
        origin: (min_e, min_n),
        cell_size,
        height,
        width,
        no_data,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(id: &str, e: f64, n: f64, row: usize) -> FramePose {
        FramePose {
            image_id: id.into(),
            easting: e,
            northing: n,
            heading: 0.0,
            row_id: row,
        }
    }

    #[test]
    fn regular_spacing_keeps_every_fifth() {
        let poses: Vec<FramePose> = (0..20)
            .map(|i| pose(&format!("f{i}"), i as f64 * 0.1, 0.0, 0))
            .collect();
        let kept = select_frames(&poses, 0.5).unwrap();
        assert_eq!(kept, vec![0, 5, 10, 15]);
    }

    #[test]
    fn single_frame_rows_are_kept() {
        let poses = vec![pose("a", 0.0, 0.0, 0), pose("b", 0.0, 4.0, 1)];
        assert_eq!(select_frames(&poses, 0.5).unwrap(), vec![0, 1]);
    }

    #[test]
    fn irregular_spacing_matches_walk_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, "frames", 0);
        let mut poses = Vec::new();
        let mut e = 0.0f64;
        for i in 0..50 {
            e += rng.random::<f64>() * 0.4;
            poses.push(pose(&format!("f{i}"), e, 0.0, 0));
        }
        let kept = select_frames(&poses, 0.5).unwrap();
        // Step-through oracle over cumulative distances.
        let mut expect = vec![0usize];
        let mut acc = 0.0;
        for i in 1..poses.len() {
            acc += poses[i].easting - poses[i - 1].easting;
            if acc >= 0.5 {
                expect.push(i);
                acc = 0.0;
            }
        }
        assert_eq!(kept, expect);
        // Spacing property: consecutive kept frames are >= spacing apart.
        for w in kept.windows(2) {
            let d = poses[w[1]].easting - poses[w[0]].easting;
            assert!(d >= 0.5 - 1e-12, "kept spacing {d}");
        }
    }

    #[test]
    fn roi_counting_is_strict() {
        let roi = Roi {
            top: 0.0,
            left: 10.0,
            bottom: 50.0,
            right: 40.0,
        };
        assert_eq!(roi_count(&[], &roi), 0);
        let dets = vec![
            Detection { row: 25.0, col: 10.0, radius: 3.0, score: None }, // on edge
            Detection { row: 25.0, col: 10.1, radius: 3.0, score: None }, // inside
            Detection { row: 50.0, col: 20.0, radius: 3.0, score: None }, // on edge
        ];
        assert_eq!(roi_count(&dets, &roi), 1);
    }

    #[test]
    fn roi_counts_match_enumeration() {
        use rand::Rng;
        let mut rng = crate::rng::stream(8, "roi", 0);
        let roi = Roi { top: 0.0, left: 0.0, bottom: 60.0, right: 48.0 };
        let dets: Vec<Detection> = (0..10)
            .map(|_| Detection {
                row: rng.random_range(0.0..60.0),
                col: rng.random_range(0.0..96.0),
                radius: 4.0,
                score: None,
            })
            .collect();
        let manual = dets
            .iter()
            .filter(|d| d.row > 0.0 && d.row < 60.0 && d.col > 0.0 && d.col < 48.0)
            .count() as u64;
        assert_eq!(roi_count(&dets, &roi), manual);
    }

    #[test]
    fn row_accumulation_sums_and_errors() {
        let mut map = HashMap::new();
        map.insert("a".to_string(), 0usize);
        map.insert("b".to_string(), 0usize);
        map.insert("c".to_string(), 0usize);
        let counts = vec![
            ("a".to_string(), 3u64),
            ("b".to_string(), 4),
            ("c".to_string(), 5),
        ];
        let rows = accumulate_rows(&counts, &map).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].algorithm_count, 12);

        // Permutation invariance.
        let mut shuffled = counts.clone();
        shuffled.reverse();
        assert_eq!(accumulate_rows(&shuffled, &map).unwrap(), rows);

        let unmapped = vec![("zzz".to_string(), 1u64)];
        assert!(accumulate_rows(&unmapped, &map).is_err());
    }

    #[test]
    fn fifteen_rows_make_fifteen_entries() {
        let mut map = HashMap::new();
        let mut counts = Vec::new();
        for r in 0..15usize {
            for f in 0..4 {
                let id = format!("r{r}f{f}");
                map.insert(id.clone(), r);
                counts.push((id, (r + f) as u64));
            }
        }
        let rows = accumulate_rows(&counts, &map).unwrap();
        assert_eq!(rows.len(), 15);
        assert_eq!(rows[3].row_id, 3);
    }

    #[test]
    fn halved_counts_calibrate_with_slope_two() {
        let mut rows: Vec<RowYield> = (1..=6)
            .map(|i| RowYield {
                row_id: i,
                algorithm_count: (i * 50) as u64,
                true_count: Some((i * 100) as u64),
                calibrated: None,
            })
            .collect();
        let cal = calibrate_linear(&mut rows).unwrap();
        assert!((cal.slope - 2.0).abs() < 1e-9);
        assert!(cal.intercept.abs() < 1e-6);
        assert!((cal.r_squared - 1.0).abs() < 1e-9);
        for r in &rows {
            let expect = r.algorithm_count as f64 * 2.0;
            assert!((r.calibrated.unwrap() - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn calibration_needs_variance_and_truths() {
        let mut rows = vec![
            RowYield { row_id: 0, algorithm_count: 5, true_count: Some(10), calibrated: None },
            RowYield { row_id: 1, algorithm_count: 5, true_count: Some(12), calibrated: None },
        ];
        assert!(calibrate_linear(&mut rows).is_err());
        let mut rows = vec![RowYield {
            row_id: 0,
            algorithm_count: 5,
            true_count: Some(10),
            calibrated: None,
        }];
        assert!(calibrate_linear(&mut rows).is_err());
    }

    #[test]
    fn uniform_counts_give_constant_raster() {
        let mut samples = Vec::new();
        for iy in 0..5 {
            for ix in 0..5 {
                samples.push((ix as f64, iy as f64, 7.0));
            }
        }
        let raster = rasterize_yield(&samples, 1.0).unwrap();
        let mut inside = 0;
        for v in &raster.data {
            if *v != raster.no_data {
                assert!((v - 7.0).abs() < 1e-9);
                inside += 1;
            }
        }
        assert!(inside > 0);
    }

    #[test]
    fn hot_frame_peaks_at_its_cell() {
        let mut samples = Vec::new();
        for iy in 0..5 {
            for ix in 0..5 {
                let v = if (ix, iy) == (2, 2) { 9.0 } else { 0.0 };
                samples.push((ix as f64, iy as f64, v));
            }
        }
        let raster = rasterize_yield(&samples, 1.0).unwrap();
        let mut best = (0usize, 0usize, -1.0f64);
        for iy in 0..raster.height {
            for ix in 0..raster.width {
                let v = raster.get(iy, ix);
                if v > best.2 {
                    best = (iy, ix, v);
                }
            }
        }
        // The hot node touches cells (1..2, 1..2); the max must be adjacent
        // to node (2, 2).
        assert!((1..=2).contains(&best.0) && (1..=2).contains(&best.1), "{best:?}");
    }

    #[test]
    fn bilinear_cell_center_of_binned_nodes() {
        // Four samples on one cell's corners: 0, 0, 0, 4 -> center value 1.
        let samples = vec![
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (1.0, 1.0, 4.0),
        ];
        let raster = rasterize_yield(&samples, 1.0).unwrap();
        assert_eq!(raster.height, 1);
        assert_eq!(raster.width, 1);
        assert!((raster.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_samples_error() {
        assert!(rasterize_yield(&[], 1.0).is_err());
    }
}
