//! Circular Hough transform on the mask's gradient edges.
//!
//! Edge pixels vote for every (center, radius) hypothesis whose circle
//! passes through them; votes are normalized by the circle's rasterized
//! circumference so one threshold (the fraction of boundary evidence
//! present) works across the radius range. Partially circular regions still
//! accumulate votes at the true center, which is what lets the transform
//! merge disjoint fragments of a single fruit.

use super::{DetectParams, Detection};
use crate::raster::BinaryMask;

/// Integer midpoint-circle offsets for a given radius (8-way symmetric).
fn circle_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut pts = Vec::new();
    let mut x = r;
    let mut y = 0i64;
    let mut err = 1 - r;
    while y <= x {
        for &(a, b) in &[
            (x, y),
            (y, x),
            (-y, x),
            (-x, y),
            (-x, -y),
            (-y, -x),
            (y, -x),
            (x, -y),
        ] {
            pts.push((a, b));
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Sobel gradient magnitude of the 0/1 mask.
fn edge_pixels(mask: &BinaryMask, threshold: f64) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height(), mask.width());
    let at = |y: i64, x: i64| -> f64 {
        if y < 0 || y >= h as i64 || x < 0 || x >= w as i64 {
            0.0
        } else if mask.get(y as usize, x as usize) {
            1.0
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            if (gx * gx + gy * gy).sqrt() > threshold {
                out.push((y as usize, x as usize));
            }
        }
    }
    out
}

/// Circular Hough detection over the radius range in `params`.
pub fn cht_detect(mask: &BinaryMask, params: &DetectParams) -> crate::error::Result<Vec<Detection>> {
    params.validate()?;
    let (h, w) = (mask.height(), mask.width());
    let edges = edge_pixels(mask, params.cht_edge_threshold);
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let res = params.cht_accum_resolution;
    let (ah, aw) = (h.div_ceil(res), w.div_ceil(res));
    let radii: Vec<usize> = (params.cht_radius_min..=params.cht_radius_max).collect();

    struct Peak {
        score: f64,
        radius: usize,
        y: f64,
        x: f64,
    }
    let mut peaks: Vec<Peak> = Vec::new();
    let mut acc = vec![0u32; ah * aw];
    for &r in &radii {
        acc.iter_mut().for_each(|v| *v = 0);
        let offsets = circle_offsets(r);
        for &(ey, ex) in &edges {
            for &(dy, dx) in &offsets {
                let (cy, cx) = (ey as i64 + dy, ex as i64 + dx);
                if cy < 0 || cy >= h as i64 || cx < 0 || cx >= w as i64 {
                    continue;
                }
                acc[(cy as usize / res) * aw + (cx as usize / res)] += 1;
            }
        }
        let norm = offsets.len() as f64;
        for cy in 0..ah {
            for cx in 0..aw {
                let score = f64::from(acc[cy * aw + cx]) / norm;
                if score >= params.cht_accum_threshold {
                    peaks.push(Peak {
                        score,
                        radius: r,
                        y: (cy * res) as f64 + (res - 1) as f64 / 2.0,
                        x: (cx * res) as f64 + (res - 1) as f64 / 2.0,
                    });
                }
            }
        }
    }

    // Strongest evidence first; deterministic tiebreaks.
    peaks.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.radius.cmp(&b.radius))
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
    });
    let min_sq = params.cht_min_center_dist * params.cht_min_center_dist;
    let mut dets: Vec<Detection> = Vec::new();
    for p in peaks {
        let far = dets.iter().all(|d| {
            let (dy, dx) = (p.y - d.row, p.x - d.col);
            dy * dy + dx * dx >= min_sq
        });
        if far {
            dets.push(Detection {
                row: p.y,
                col: p.x,
                radius: p.radius as f64,
                score: Some(p.score),
            });
        }
    }
    Ok(dets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paint_disk(mask: &mut BinaryMask, cy: i64, cx: i64, r: f64) {
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let (dy, dx) = (y as i64 - cy, x as i64 - cx);
                if (dy * dy + dx * dx) as f64 <= r * r {
                    mask.set(y, x, true);
                }
            }
        }
    }

    #[test]
    fn single_circle_detected_with_radius() {
        let mut mask = BinaryMask::new(64, 64);
        paint_disk(&mut mask, 32, 30, 12.0);
        let dets = cht_detect(&mask, &DetectParams::default()).unwrap();
        assert_eq!(dets.len(), 1, "{dets:?}");
        let d = dets[0];
        assert!((d.row - 32.0).abs() <= 2.0 && (d.col - 30.0).abs() <= 2.0);
        assert!((d.radius - 12.0).abs() <= 2.0, "radius {}", d.radius);
    }

    #[test]
    fn split_disk_merges_into_one_detection() {
        // The same bar-occluded disk the watershed splits in two: the
        // transform accumulates both arcs at the original center.
        let mut mask = BinaryMask::new(64, 64);
        paint_disk(&mut mask, 32, 32, 15.0);
        for y in 0..64 {
            for x in 30..35 {
                mask.set(y, x, false);
            }
        }
        let dets = cht_detect(&mask, &DetectParams::default()).unwrap();
        assert_eq!(dets.len(), 1, "{dets:?}");
        assert!((dets[0].row - 32.0).abs() <= 2.0 && (dets[0].col - 32.0).abs() <= 2.0);
    }

    #[test]
    fn blank_mask_empty() {
        let mask = BinaryMask::new(32, 32);
        assert!(cht_detect(&mask, &DetectParams::default()).unwrap().is_empty());
    }

    #[test]
    fn empty_radius_range_is_parameter_error() {
        let mask = BinaryMask::new(32, 32);
        let params = DetectParams {
            cht_radius_min: 20,
            cht_radius_max: 20,
            ..DetectParams::default()
        };
        assert!(cht_detect(&mask, &params).is_err());
    }

    #[test]
    fn rotation_by_quarter_turn_maps_centers() {
        let mut mask = BinaryMask::new(80, 80);
        paint_disk(&mut mask, 25, 30, 13.0);
        paint_disk(&mut mask, 55, 60, 12.0);
        let dets = cht_detect(&mask, &DetectParams::default()).unwrap();
        // Rotate 90 degrees clockwise: (y, x) -> (x, H-1-y).
        let mut rotated = BinaryMask::new(80, 80);
        for y in 0..80 {
            for x in 0..80 {
                if mask.get(y, x) {
                    rotated.set(x, 79 - y, true);
                }
            }
        }
        let rdets = cht_detect(&rotated, &DetectParams::default()).unwrap();
        assert_eq!(dets.len(), rdets.len());
        for d in &dets {
            let (ry, rx) = (d.col, 79.0 - d.row);
            let matched = rdets
                .iter()
                .any(|r| (r.row - ry).abs() <= 1.0 && (r.col - rx).abs() <= 1.0);
            assert!(matched, "no rotated match for {d:?}");
        }
    }
}
