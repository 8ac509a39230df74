//! Exact Euclidean distance transform (two-pass lower-envelope algorithm on
//! squared distances).
//!
//! Every foreground pixel gets its exact distance to the nearest background
//! pixel; the image border counts as background, so an all-true mask falls
//! off toward the virtual border. Background pixels are 0.

use crate::raster::BinaryMask;

const INF: f64 = 1e18;

/// 1-D squared-distance transform: lower envelope of parabolas rooted at
/// `(i, f[i])`.
fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                // The new parabola dominates the previous interval boundary.
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Squared Euclidean distances on a grid padded with one background ring
/// (the virtual border). Returned without the padding.
fn squared_distances(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = (mask.height(), mask.width());
    let (ph, pw) = (h + 2, w + 2);
    // Column pass over the padded grid.
    let mut col = vec![0.0f64; ph * pw];
    let mut f = vec![0.0f64; ph.max(pw)];
    let mut d = vec![0.0f64; ph.max(pw)];
    let mut v = vec![0usize; ph.max(pw)];
    let mut z = vec![0.0f64; ph.max(pw) + 1];
    for x in 0..pw {
        for y in 0..ph {
            let inside = y >= 1 && y <= h && x >= 1 && x <= w && mask.get(y - 1, x - 1);
            f[y] = if inside { INF } else { 0.0 };
        }
        dt_1d(&f[..ph], &mut d[..ph], &mut v[..ph], &mut z[..ph + 1]);
        for y in 0..ph {
            col[y * pw + x] = d[y];
        }
    }
    // Row pass.
    let mut out = vec![0.0f64; h * w];
    for y in 1..=h {
        f[..pw].copy_from_slice(&col[y * pw..(y + 1) * pw]);
        dt_1d(&f[..pw], &mut d[..pw], &mut v[..pw], &mut z[..pw + 1]);
        for x in 1..=w {
            out[(y - 1) * w + (x - 1)] = d[x];
        }
    }
    out
}

/// Exact Euclidean distance of every pixel to the nearest background pixel
/// (or the virtual border just outside the image); 0 on background.
pub fn distance_transform(mask: &BinaryMask) -> Vec<f64> {
    squared_distances(mask).into_iter().map(f64::sqrt).collect()
}

/// Squared-distance variant used by the watershed (exact integers).
pub fn distance_transform_squared(mask: &BinaryMask) -> Vec<f64> {
    squared_distances(mask)
}
