//! Image pyramid for multi-scale patch extraction.
//!
//! Levels are produced by repeated 2x2 box filtering and subsampling; the
//! target extent of level `s` is `round(side * s)` computed from the
//! original image, with the box windows clamped at the borders (a trailing
//! row/column is dropped when the rounding truncates).

use crate::error::{CoreError, Result};
use crate::nn::Real;
use crate::raster::Image;

/// Round-half-up, the rounding rule used for level extents and patch
/// centers throughout.
#[inline]
pub fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Multi-resolution stack; level 0 is the input image.
#[derive(Clone, Debug)]
pub struct Pyramid {
    levels: Vec<Image>,
    scales: Vec<f64>,
}

impl Pyramid {
    pub fn levels(&self) -> &[Image] {
        &self.levels
    }

    pub fn level(&self, s: usize) -> &Image {
        &self.levels[s]
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Validates a scale list: strictly decreasing, first = 1, and dyadic
/// (each scale exactly half the previous one).
pub fn validate_scales(scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(CoreError::Config("scale list is empty".into()));
    }
    if scales[0] != 1.0 {
        return Err(CoreError::Config(format!(
            "first scale must be 1, got {}",
            scales[0]
        )));
    }
    for k in 1..scales.len() {
        if (scales[k] - scales[k - 1] / 2.0).abs() > 1e-12 {
            return Err(CoreError::Config(format!(
                "scales must halve at each level, got {} after {}",
                scales[k],
                scales[k - 1]
            )));
        }
    }
    Ok(())
}

fn downsample_box2(src: &Image, th: usize, tw: usize) -> Image {
    let (sh, sw) = (src.height(), src.width());
    let mut out = Image::new(th, tw);
    for y in 0..th {
        let y0 = 2 * y;
        let y1 = (2 * y + 1).min(sh - 1);
        for x in 0..tw {
            let x0 = 2 * x;
            let x1 = (2 * x + 1).min(sw - 1);
            let a = src.pixel(y0, x0);
            let b = src.pixel(y0, x1);
            let c = src.pixel(y1, x0);
            let d = src.pixel(y1, x1);
            out.set_pixel(
                y,
                x,
                [
                    0.25 * (a[0] + b[0] + c[0] + d[0]),
                    0.25 * (a[1] + b[1] + c[1] + d[1]),
                    0.25 * (a[2] + b[2] + c[2] + d[2]),
                ],
            );
        }
    }
    out
}

/// Builds the pyramid for the given dyadic scale list.
pub fn build_pyramid(image: &Image, scales: &[f64]) -> Result<Pyramid> {
    validate_scales(scales)?;
    let (h, w) = (image.height(), image.width());
    let mut levels = Vec::with_capacity(scales.len());
    levels.push(image.clone());
    for &s in &scales[1..] {
        let th = round_half_up(h as f64 * s);
        let tw = round_half_up(w as f64 * s);
        if th < 1 || tw < 1 {
            return Err(CoreError::Dimension(format!(
                "image {h}x{w} too small for scale {s}"
            )));
        }
        let prev = levels.last().unwrap();
        levels.push(downsample_box2(prev, th as usize, tw as usize));
    }
    Ok(Pyramid {
        levels,
        scales: scales.to_vec(),
    })
}

/// Copies the `side x side x 3` window centered at `(cy, cx)` of `level`
/// into `out` in `[y][x][channel]` order; out-of-bounds pixels are zero.
///
/// The center sits at window index `side/2`, so an even side spans
/// `[c - side/2, c + side/2 - 1]`.
pub fn gather_window_zero<F: Real>(level: &Image, cy: i64, cx: i64, side: usize, out: &mut [F]) {
    debug_assert_eq!(out.len(), side * side * 3);
    let off = (side / 2) as i64;
    let (h, w) = (level.height() as i64, level.width() as i64);
    let mut idx = 0;
    for ty in 0..side as i64 {
        let y = cy + ty - off;
        for tx in 0..side as i64 {
            let x = cx + tx - off;
            if y >= 0 && y < h && x >= 0 && x < w {
                let p = level.pixel(y as usize, x as usize);
                out[idx] = F::cast_from(f64::from(p[0]));
                out[idx + 1] = F::cast_from(f64::from(p[1]));
                out[idx + 2] = F::cast_from(f64::from(p[2]));
            } else {
                out[idx] = F::zero();
                out[idx + 1] = F::zero();
                out[idx + 2] = F::zero();
            }
            idx += 3;
        }
    }
}

/// Per-scale window center for source pixel `(i, j)`: `round(i*s)`.
#[inline]
pub fn level_center(i: usize, s: f64) -> i64 {
    round_half_up(i as f64 * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> Image {
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let v = (y * w + x) as f32 / (h * w) as f32;
                img.set_pixel(y, x, [v, v * 0.5, 1.0 - v]);
            }
        }
        img
    }

    #[test]
    fn paper_extents_at_dyadic_scales() {
        let img = Image::new(308, 202);
        let pyr = build_pyramid(&img, &[1.0, 0.5, 0.25, 0.125]).unwrap();
        let dims: Vec<(usize, usize)> = pyr
            .levels()
            .iter()
            .map(|l| (l.height(), l.width()))
            .collect();
        assert_eq!(dims, vec![(308, 202), (154, 101), (77, 51), (39, 25)]);
    }

    #[test]
    fn single_scale_is_identity() {
        let img = gradient_image(16, 12);
        let pyr = build_pyramid(&img, &[1.0]).unwrap();
        assert_eq!(pyr.num_levels(), 1);
        assert_eq!(pyr.level(0), &img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let mut img = Image::new(33, 21);
        for y in 0..33 {
            for x in 0..21 {
                img.set_pixel(y, x, [0.25, 0.5, 0.75]);
            }
        }
        let pyr = build_pyramid(&img, &[1.0, 0.5, 0.25]).unwrap();
        for level in pyr.levels() {
            for y in 0..level.height() {
                for x in 0..level.width() {
                    let p = level.pixel(y, x);
                    assert!((p[0] - 0.25).abs() < 1e-6);
                    assert!((p[1] - 0.5).abs() < 1e-6);
                    assert!((p[2] - 0.75).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn non_dyadic_scales_rejected() {
        let img = Image::new(32, 32);
        assert!(build_pyramid(&img, &[1.0, 0.3]).is_err());
        assert!(build_pyramid(&img, &[0.5, 0.25]).is_err());
    }

    #[test]
    fn tiny_image_at_deep_scale_is_error() {
        let img = Image::new(3, 3);
        assert!(build_pyramid(&img, &[1.0, 0.5, 0.25, 0.125]).is_err());
    }

    #[test]
    fn gather_zero_fills_corners() {
        let img = gradient_image(64, 64);
        let mut out = vec![0.0f32; 8 * 8 * 3];
        gather_window_zero(&img, 0, 0, 8, &mut out);
        // Top-left quadrant rows/cols with negative source indices are zero.
        for ty in 0..4 {
            for tx in 0..4 {
                let idx = (ty * 8 + tx) * 3;
                assert_eq!(&out[idx..idx + 3], &[0.0, 0.0, 0.0]);
            }
        }
        // In-bounds corner pixel must be copied.
        let idx = (4 * 8 + 4) * 3;
        assert_eq!(out[idx], img.pixel(0, 0)[0]);
    }

    #[test]
    fn gather_matches_direct_indexing() {
        let img = gradient_image(32, 32);
        let mut out = vec![0.0f32; 8 * 8 * 3];
        gather_window_zero(&img, 13, 9, 8, &mut out);
        for ty in 0..8i64 {
            for tx in 0..8i64 {
                let (y, x) = (13 + ty - 4, 9 + tx - 4);
                let idx = ((ty * 8 + tx) * 3) as usize;
                let expect = img.pixel(y as usize, x as usize);
                assert_eq!(&out[idx..idx + 3], &expect);
            }
        }
    }
}
