//! Marker-based watershed on the negated distance transform.
//!
//! Each object is characterized by a local maximum of the distance-to-
//! background field; flooding the negated field from those seeds assigns
//! every mask pixel to a basin, and each basin becomes one detection whose
//! center is the seed and whose radius is the seed's distance value.

use super::dist::distance_transform_squared;
use super::{DetectParams, Detection};
use crate::raster::BinaryMask;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(PartialEq)]
struct FloodEntry {
    dist_sq: f64,
    y: usize,
    x: usize,
    label: u32,
}

impl Eq for FloodEntry {}

impl Ord for FloodEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: highest distance first; ties resolved toward smaller
        // (y, x, label) so flooding order is deterministic.
        self.dist_sq
            .partial_cmp(&other.dist_sq)
            .unwrap()
            .then_with(|| other.y.cmp(&self.y))
            .then_with(|| other.x.cmp(&self.x))
            .then_with(|| other.label.cmp(&self.label))
    }
}

impl PartialOrd for FloodEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Local maxima of the distance field inside the mask, suppressed within
/// `min_dist` of a stronger peak.
fn find_peaks(dist_sq: &[f64], h: usize, w: usize, min_dist: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = dist_sq[y * w + x];
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'scan: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                    if yy < 0 || yy >= h as i64 || xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    if dist_sq[yy as usize * w + xx as usize] > v {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                candidates.push((y, x));
            }
        }
    }
    // Strongest first; deterministic tiebreak by position.
    candidates.sort_by(|&(ay, ax), &(by, bx)| {
        dist_sq[by * w + bx]
            .partial_cmp(&dist_sq[ay * w + ax])
            .unwrap()
            .then(ay.cmp(&by))
            .then(ax.cmp(&bx))
    });
    let min_sq = min_dist * min_dist;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (y, x) in candidates {
        let far = kept.iter().all(|&(ky, kx)| {
            let (dy, dx) = (y as f64 - ky as f64, x as f64 - kx as f64);
            dy * dy + dx * dx >= min_sq
        });
        if far {
            kept.push((y, x));
        }
    }
    kept
}

/// Watershed fruit detection. Empty masks yield an empty list.
pub fn watershed_detect(mask: &BinaryMask, params: &DetectParams) -> crate::error::Result<Vec<Detection>> {
    params.validate()?;
    let (h, w) = (mask.height(), mask.width());
    if mask.count_true() == 0 {
        return Ok(Vec::new());
    }
    let dist_sq = distance_transform_squared(mask);
    let seeds = find_peaks(&dist_sq, h, w, params.ws_min_peak_dist);
    if seeds.is_empty() {
        return Ok(Vec::new());
    }

    const UNLABELED: u32 = u32::MAX;
    let mut labels = vec![UNLABELED; h * w];
    let mut heap = BinaryHeap::new();
    for (i, &(y, x)) in seeds.iter().enumerate() {
        labels[y * w + x] = i as u32;
        heap.push(FloodEntry {
            dist_sq: dist_sq[y * w + x],
            y,
            x,
            label: i as u32,
        });
    }
    while let Some(e) = heap.pop() {
        for (dy, dx) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (yy, xx) = (e.y as i64 + dy, e.x as i64 + dx);
            if yy < 0 || yy >= h as i64 || xx < 0 || xx >= w as i64 {
                continue;
            }
            let (yy, xx) = (yy as usize, xx as usize);
            let idx = yy * w + xx;
            if !mask.get(yy, xx) || labels[idx] != UNLABELED {
                continue;
            }
            labels[idx] = e.label;
            heap.push(FloodEntry {
                dist_sq: dist_sq[idx],
                y: yy,
                x: xx,
                label: e.label,
            });
        }
    }

    Ok(seeds
        .iter()
        .map(|&(y, x)| Detection {
            row: y as f64,
            col: x as f64,
            radius: dist_sq[y * w + x].sqrt(),
            score: Some(dist_sq[y * w + x].sqrt()),
        })
        .collect())
}
