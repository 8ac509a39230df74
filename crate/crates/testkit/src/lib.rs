//! Independent brute-force oracles for the orchard test suites.
//!
//! Everything here is deliberately written as plain nested loops over flat
//! slices, with no dependency on the library under test: these are the
//! reference computations the optimized implementations are checked against.

/// Dense layer reference: `y_j = act(sum_i w[j][i] x_i + b_j)`.
///
/// `w` is row-major `[out, in]`; `act` maps the pre-activation.
pub fn naive_dense(w: &[f64], b: &[f64], x: &[f64], act: fn(f64) -> f64) -> Vec<f64> {
    let n_out = b.len();
    let n_in = x.len();
    assert_eq!(w.len(), n_out * n_in);
    let mut out = vec![0.0; n_out];
    for j in 0..n_out {
        let mut acc = b[j];
        for i in 0..n_in {
            acc += w[j * n_in + i] * x[i];
        }
        out[j] = act(acc);
    }
    out
}

pub fn identity(z: f64) -> f64 {
    z
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// Valid-mode cross-correlation reference with quadruple loops.
///
/// `input` is `[h][w][c]` row-major, `kernels` is `[k][kh][kw][c]`, output
/// is `[h-kh+1][w-kw+1][k]`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    input: &[f64],
    h: usize,
    w: usize,
    c: usize,
    kernels: &[f64],
    k: usize,
    kh: usize,
    kw: usize,
    bias: &[f64],
) -> Vec<f64> {
    assert_eq!(input.len(), h * w * c);
    assert_eq!(kernels.len(), k * kh * kw * c);
    assert_eq!(bias.len(), k);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow * k];
    for y in 0..oh {
        for x in 0..ow {
            for ki in 0..k {
                let mut acc = bias[ki];
                for dy in 0..kh {
                    for dx in 0..kw {
                        for ch in 0..c {
                            let iv = input[((y + dy) * w + (x + dx)) * c + ch];
                            let kv = kernels[((ki * kh + dy) * kw + dx) * c + ch];
                            acc += iv * kv;
                        }
                    }
                }
                out[(y * ow + x) * k + ki] = acc;
            }
        }
    }
    out
}

/// 2x2 stride-2 max pooling reference.
pub fn naive_maxpool(input: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow * c];
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        best = best.max(input[((2 * y + dy) * w + (2 * x + dx)) * c + ch]);
                    }
                }
                out[(y * ow + x) * c + ch] = best;
            }
        }
    }
    out
}

/// Direct softmax `e^z / sum e^z` in f64 (callers keep z small enough that
/// no stabilization is needed; that asymmetry against the implementation is
/// the point of the oracle).
pub fn softmax_direct(z: &[f64]) -> Vec<f64> {
    let sum: f64 = z.iter().map(|v| v.exp()).sum();
    z.iter().map(|v| v.exp() / sum).collect()
}

/// Exact Euclidean distance transform by exhaustive nearest-false search.
/// The virtual border outside the raster counts as background.
pub fn brute_force_edt(mask: &[bool], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(mask.len(), h * w);
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            let border = (y + 1).min(h - y).min(x + 1).min(w - x) as i64;
            let mut best_sq = border * border;
            for yy in 0..h {
                for xx in 0..w {
                    if !mask[yy * w + xx] {
                        let (dy, dx) = (y as i64 - yy as i64, x as i64 - xx as i64);
                        best_sq = best_sq.min(dy * dy + dx * dx);
                    }
                }
            }
            out[y * w + x] = (best_sq as f64).sqrt();
        }
    }
    out
}

/// Reference greedy one-to-one matcher: candidate `(det, truth)` pairs with
/// center distance <= truth radius, scanned in ascending distance order
/// (ties by detection index then truth index). Returns matched pairs.
pub fn greedy_match_reference(
    dets: &[(f64, f64)],
    truths: &[(f64, f64, f64)],
) -> Vec<(usize, usize)> {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, t) in truths.iter().enumerate() {
            let dist = ((d.0 - t.0).powi(2) + (d.1 - t.1).powi(2)).sqrt();
            if dist <= t.2 {
                cands.push((dist, i, j));
            }
        }
    }
    cands.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_d = vec![false; dets.len()];
    let mut used_t = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// Normal-equations least squares for `y = slope x + intercept`.
pub fn fit_normal_equations(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Reference coefficient of determination for the fit of `y` on `x`.
pub fn r_squared_reference(x: &[f64], y: &[f64]) -> f64 {
    let (slope, intercept) = fit_normal_equations(x, y);
    let my: f64 = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    1.0 - ss_res / ss_tot
}

/// F1 from confusion counts.
pub fn f1_reference(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_sanity() {
        // y = 2x + 1 fits exactly.
        let x = [1.0, 2.0, 3.0];
        let y = [3.0, 5.0, 7.0];
        let (s, i) = fit_normal_equations(&x, &y);
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12);
        assert!((r_squared_reference(&x, &y) - 1.0).abs() < 1e-12);
        assert_eq!(f1_reference(0, 3, 4), 0.0);
        let sm = softmax_direct(&[0.0, 0.0]);
        assert!((sm[0] - 0.5).abs() < 1e-15);
    }
}
