//! Pixel-level and detection-level scoring: validation threshold selection,
//! precision/recall/F1, greedy one-to-one matching, count regression and
//! yield error.

use crate::detect::Detection;
use crate::error::{CoreError, Result};
use crate::raster::{BinaryMask, ProbMap};

/// Pixel confusion counts and derived scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelScore {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PixelScore {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> PixelScore {
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PixelScore {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

fn accumulate_counts(
    prob: &ProbMap,
    gt: &BinaryMask,
    t: f32,
    margin: usize,
    counts: &mut (u64, u64, u64, u64),
) -> Result<()> {
    if prob.height() != gt.height() || prob.width() != gt.width() {
        return Err(CoreError::Dimension(format!(
            "probability map {}x{} vs mask {}x{}",
            prob.height(),
            prob.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (h, w) = (prob.height(), prob.width());
    if 2 * margin >= h || 2 * margin >= w {
        return Err(CoreError::Parameter(format!(
            "border margin {margin} leaves no pixels in {h}x{w}"
        )));
    }
    for y in margin..h - margin {
        for x in margin..w - margin {
            let pred = prob.get(y, x) >= t;
            let truth = gt.get(y, x);
            match (pred, truth) {
                (true, true) => counts.0 += 1,
                (true, false) => counts.1 += 1,
                (false, false) => counts.2 += 1,
                (false, true) => counts.3 += 1,
            }
        }
    }
    Ok(())
}

/// Precision/recall/F1 of one probability map against ground truth at
/// threshold `t`, with a masked-out border band.
pub fn pixel_prf(prob: &ProbMap, gt: &BinaryMask, t: f32, margin: usize) -> Result<PixelScore> {
    let mut counts = (0u64, 0u64, 0u64, 0u64);
    accumulate_counts(prob, gt, t, margin, &mut counts)?;
    Ok(PixelScore::from_counts(counts.0, counts.1, counts.2, counts.3))
}

/// The 101-point threshold grid `{0.00, 0.01, ..., 1.00}`.
pub fn threshold_grid() -> Vec<f32> {
    (0..=100).map(|i| i as f32 / 100.0).collect()
}

/// Picks the threshold maximizing pooled F1 over the validation maps; ties
/// are broken toward 0.5 (then toward the lower threshold).
pub fn select_threshold(maps: &[ProbMap], masks: &[BinaryMask], margin: usize) -> Result<f32> {
    if maps.is_empty() || maps.len() != masks.len() {
        return Err(CoreError::Parameter(
            "threshold selection needs a nonempty, aligned validation set".into(),
        ));
    }
    let any_fruit = masks.iter().any(|m| m.count_true() > 0);
    let any_background = masks
        .iter()
        .any(|m| m.count_true() < m.height() * m.width());
    if !any_fruit || !any_background {
        return Err(CoreError::UndefinedMetric(
            "single-class validation set: F1 is undefined over the threshold grid".into(),
        ));
    }
    let mut best: Option<(f64, f32)> = None;
    for t in threshold_grid() {
        let mut counts = (0u64, 0u64, 0u64, 0u64);
        for (prob, gt) in maps.iter().zip(masks.iter()) {
            accumulate_counts(prob, gt, t, margin, &mut counts)?;
        }
        let f1 = PixelScore::from_counts(counts.0, counts.1, counts.2, counts.3).f1;
        let better = match best {
            None => true,
            Some((bf, bt)) => {
                f1 > bf
                    || (f1 == bf
                        && ((t - 0.5).abs() < (bt - 0.5).abs()
                            || ((t - 0.5).abs() == (bt - 0.5).abs() && t < bt)))
            }
        };
        if better {
            best = Some((f1, t));
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

/// One-to-one matching between detections and ground-truth circles.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// `(detection index, truth index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_detections.len()
    }

    pub fn fn_(&self) -> usize {
        self.unmatched_truths.len()
    }

    pub fn precision(&self) -> f64 {
        if self.tp() + self.fp() > 0 {
            self.tp() as f64 / (self.tp() + self.fp()) as f64
        } else {
            0.0
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp() + self.fn_() > 0 {
            self.tp() as f64 / (self.tp() + self.fn_()) as f64
        } else {
            0.0
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

/// Greedy 1-nearest-neighbour one-to-one matching: a detection can match a
/// truth whose annotated region contains its center (distance <= truth
/// radius); candidate pairs are taken in ascending distance order with ties
/// broken by (detection index, truth index).
pub fn match_detections(dets: &[Detection], truths: &[Detection]) -> MatchResult {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, t) in truths.iter().enumerate() {
            let dist = ((d.row - t.row).powi(2) + (d.col - t.col).powi(2)).sqrt();
            if dist <= t.radius {
                candidates.push((dist, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut det_used = vec![false; dets.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !det_used[i] && !truth_used[j] {
            det_used[i] = true;
            truth_used[j] = true;
            pairs.push((i, j));
        }
    }
    MatchResult {
        pairs,
        unmatched_detections: (0..dets.len()).filter(|&i| !det_used[i]).collect(),
        unmatched_truths: (0..truths.len()).filter(|&j| !truth_used[j]).collect(),
    }
}

/// Least-squares fit `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CoreError::Fit(
            "linear fit needs at least two aligned points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(CoreError::Fit("zero variance in fit inputs".into()));
    }
    let sxy: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Coefficient of determination of the least-squares linear fit of `truths`
/// on `estimates`: `1 - SS_res / SS_tot`.
pub fn r_squared(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.len() < 2 {
        return Err(CoreError::UndefinedMetric(
            "r-squared needs at least two aligned points".into(),
        ));
    }
    let n = truths.len() as f64;
    let my = truths.iter().sum::<f64>() / n;
    let ss_tot: f64 = truths.iter().map(|v| (v - my) * (v - my)).sum();
    if ss_tot == 0.0 {
        return Err(CoreError::UndefinedMetric(
            "zero truth variance: r-squared is undefined".into(),
        ));
    }
    let (slope, intercept) = linear_fit(estimates, truths)?;
    let ss_res: f64 = estimates
        .iter()
        .zip(truths.iter())
        .map(|(&e, &t)| {
            let r = t - (slope * e + intercept);
            r * r
        })
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Accumulated absolute per-row estimation error normalized against the
/// total fruit count, in percent.
pub fn yield_error_percent(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(CoreError::UndefinedMetric(
            "yield error needs aligned nonempty lists".into(),
        ));
    }
    let total: f64 = truths.iter().sum();
    if total == 0.0 {
        return Err(CoreError::UndefinedMetric(
            "zero total fruit count: yield error is undefined".into(),
        ));
    }
    let abs_err: f64 = estimates
        .iter()
        .zip(truths.iter())
        .map(|(e, t)| (e - t).abs())
        .sum();
    Ok(abs_err / total * 100.0)
}
