//! Binary morphology with a disk structuring element.

use crate::raster::BinaryMask;

/// Offsets within a Euclidean disk of the given radius.
fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                out.push((dy, dx));
            }
        }
    }
    out
}

/// Erosion: a pixel survives iff the whole disk around it is foreground.
/// Out-of-bounds counts as background.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.height(), mask.width());
    let offsets = disk_offsets(radius);
    let mut out = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            let keep = offsets.iter().all(|&(dy, dx)| {
                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                yy >= 0 && yy < h as i64 && xx >= 0 && xx < w as i64 && mask.get(yy as usize, xx as usize)
            });
            out.set(y, x, keep);
        }
    }
    out
}

/// Dilation: every foreground pixel paints the disk around it.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.height(), mask.width());
    let offsets = disk_offsets(radius);
    let mut out = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            for &(dy, dx) in &offsets {
                let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                if yy >= 0 && yy < h as i64 && xx >= 0 && xx < w as i64 {
                    out.set(yy as usize, xx as usize, true);
                }
            }
        }
    }
    out
}

/// Morphological opening (erosion then dilation) with a disk element;
/// removes components smaller than the element. Radius 0 is the identity.
pub fn morph_clean(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    dilate(&erode(mask, radius), radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_mask(h: usize, w: usize, cy: i64, cx: i64, r: f64) -> BinaryMask {
        let mut m = BinaryMask::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as i64 - cy, x as i64 - cx);
                if (dy * dy + dx * dx) as f64 <= r * r {
                    m.set(y, x, true);
                }
            }
        }
        m
    }

    #[test]
    fn radius_zero_is_identity() {
        let m = disk_mask(16, 16, 8, 8, 4.0);
        assert_eq!(morph_clean(&m, 0), m);
    }

    #[test]
    fn isolated_pixel_removed() {
        let mut m = BinaryMask::new(9, 9);
        m.set(4, 4, true);
        let cleaned = morph_clean(&m, 1);
        assert_eq!(cleaned.count_true(), 0);
    }

    #[test]
    fn solid_disk_mostly_preserved() {
        // 20 px diameter disk survives an opening with a radius-2 element.
        let m = disk_mask(32, 32, 16, 16, 10.0);
        let before = m.count_true();
        let cleaned = morph_clean(&m, 2);
        let after = cleaned.count_true();
        assert!(after > 0);
        let loss = (before as f64 - after as f64).abs() / before as f64;
        assert!(loss < 0.15, "area loss {loss}");
    }

    #[test]
    fn opening_is_anti_extensive() {
        // Opened mask is a subset of the original.
        let mut m = disk_mask(24, 24, 10, 10, 6.0);
        m.set(2, 20, true);
        m.set(3, 20, true);
        let cleaned = morph_clean(&m, 2);
        for (a, b) in cleaned.data().iter().zip(m.data().iter()) {
            assert!(!*a || *b);
        }
    }
}
