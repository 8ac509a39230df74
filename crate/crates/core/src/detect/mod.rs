//! Individual fruit detection on segmentation output: thresholding,
//! morphological cleanup, watershed splitting of touching fruits and
//! circular Hough transform merging of fragmented ones.

pub mod dist;
pub mod hough;
pub mod morph;
pub mod watershed;

pub use dist::distance_transform;
pub use hough::cht_detect;
pub use morph::morph_clean;
pub use watershed::watershed_detect;

use crate::error::{CoreError, Result};
use crate::raster::{BinaryMask, ProbMap};
use serde::{Deserialize, Serialize};

/// A detected fruit: circle center (row, col) and radius in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub row: f64,
    pub col: f64,
    pub radius: f64,
    pub score: Option<f64>,
}

/// Detection hyperparameters. The watershed needs one (the peak distance);
/// the circular Hough transform is governed by six.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    /// Non-maximum suppression distance between watershed seed peaks.
    pub ws_min_peak_dist: f64,
    /// Smallest circle radius voted for (pixels).
    pub cht_radius_min: usize,
    /// Largest circle radius voted for (pixels).
    pub cht_radius_max: usize,
    /// Fraction of a full circle's boundary evidence required for a peak.
    pub cht_accum_threshold: f64,
    /// Sobel gradient magnitude above which a mask pixel is an edge.
    pub cht_edge_threshold: f64,
    /// Suppression distance between accepted circle centers.
    pub cht_min_center_dist: f64,
    /// Accumulator cell size in pixels (1 = per-pixel).
    pub cht_accum_resolution: usize,
    /// Disk radius of the morphological opening.
    pub morph_radius: usize,
    /// Detections closer than this to an image edge are dropped.
    pub boundary_margin: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        // Radius bounds bracket the apple scale (25-50 px diameters) with
        // slack; everything is tunable over a validation sweep.
        DetectParams {
            ws_min_peak_dist: 10.0,
            cht_radius_min: 10,
            cht_radius_max: 28,
            cht_accum_threshold: 0.4,
            cht_edge_threshold: 1.0,
            cht_min_center_dist: 12.0,
            cht_accum_resolution: 1,
            morph_radius: 1,
            boundary_margin: 10.0,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<()> {
        if self.cht_radius_min >= self.cht_radius_max {
            return Err(CoreError::Parameter(format!(
                "radius range [{}, {}] is empty",
                self.cht_radius_min, self.cht_radius_max
            )));
        }
        if self.ws_min_peak_dist <= 0.0 || self.cht_min_center_dist <= 0.0 {
            return Err(CoreError::Parameter("distances must be positive".into()));
        }
        if self.cht_accum_resolution == 0 {
            return Err(CoreError::Parameter("accumulator resolution must be >= 1".into()));
        }
        if self.boundary_margin < 0.0 {
            return Err(CoreError::Parameter("boundary margin must be >= 0".into()));
        }
        Ok(())
    }
}

/// `mask[p] = prob[p] >= t`, for `t` in [0, 1].
pub fn threshold_map(prob: &ProbMap, t: f32) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CoreError::Parameter(format!(
            "threshold {t} outside [0, 1]"
        )));
    }
    let mut mask = BinaryMask::new(prob.height(), prob.width());
    for (m, &p) in mask.data_mut().iter_mut().zip(prob.data().iter()) {
        *m = p >= t;
    }
    Ok(mask)
}

/// Removes detections whose center lies within `margin` of any image edge.
pub fn filter_boundary(
    dets: &[Detection],
    margin: f64,
    height: usize,
    width: usize,
) -> Vec<Detection> {
    dets.iter()
        .filter(|d| {
            d.row >= margin
                && d.col >= margin
                && d.row < height as f64 - margin
                && d.col < width as f64 - margin
        })
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_zero_all_true_and_bounds_checked() {
        let prob = ProbMap::from_data(2, 2, vec![0.0, 0.3, 0.6, 1.0]).unwrap();
        let m = threshold_map(&prob, 0.0).unwrap();
        assert_eq!(m.count_true(), 4);
        let m = threshold_map(&prob, 1.0).unwrap();
        assert_eq!(m.count_true(), 1);
        assert!(threshold_map(&prob, 1.0 + f32::EPSILON).is_err());
        assert!(threshold_map(&prob, -0.1).is_err());
    }

    #[test]
    fn threshold_uniform_point_six() {
        let prob = ProbMap::from_data(2, 3, vec![0.6; 6]).unwrap();
        let m = threshold_map(&prob, 0.5).unwrap();
        assert_eq!(m.count_true(), 6);
    }

    #[test]
    fn boundary_filter_rules() {
        let dets = vec![
            Detection { row: 9.0, col: 50.0, radius: 5.0, score: None },
            Detection { row: 10.0, col: 50.0, radius: 5.0, score: None },
            Detection { row: 50.0, col: 89.0, radius: 5.0, score: None },
            Detection { row: 50.0, col: 90.0, radius: 5.0, score: None },
        ];
        // margin 0 is the identity
        assert_eq!(filter_boundary(&dets, 0.0, 100, 100).len(), 4);
        let kept = filter_boundary(&dets, 10.0, 100, 100);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|d| d.row >= 10.0 && d.col < 90.0));
    }
}
