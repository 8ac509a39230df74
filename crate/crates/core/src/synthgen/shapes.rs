//! Integer rasterization helpers shared by the scene generator and the
//! detection oracle tests. Everything is square-distance based: no
//! trigonometry, so output is bit-stable across platforms.

use crate::raster::BinaryMask;

/// Marks the disk `(cy, cx, r)` true in the mask (clipped at borders).
pub fn paint_disk(mask: &mut BinaryMask, cy: f64, cx: f64, r: f64) {
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    let y0 = ((cy - r).floor() as i64).max(0);
    let y1 = ((cy + r).ceil() as i64).min(h - 1);
    let x0 = ((cx - r).floor() as i64).max(0);
    let x1 = ((cx + r).ceil() as i64).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            if dy * dy + dx * dx <= r * r {
                mask.set(y as usize, x as usize, true);
            }
        }
    }
}

/// Clears a thick bar through `(cy, cx)` along the (integer) direction
/// `(dy, dx)`; used to occlude disks in the fragment-merging oracle.
///
/// The bar is the set of pixels within `half_width` of the line through the
/// center with direction `(dy, dx)`.
pub fn clear_bar(mask: &mut BinaryMask, cy: f64, cx: f64, dir: (i64, i64), half_width: f64) {
    let (h, w) = (mask.height(), mask.width());
    let len = ((dir.0 * dir.0 + dir.1 * dir.1) as f64).sqrt();
    let (uy, ux) = (dir.0 as f64 / len, dir.1 as f64 / len);
    for y in 0..h {
        for x in 0..w {
            // Perpendicular distance from the line through (cy, cx).
            let (py, px) = (y as f64 - cy, x as f64 - cx);
            let cross = (py * ux - px * uy).abs();
            if cross <= half_width {
                mask.set(y, x, false);
            }
        }
    }
}

/// 16 unit direction vectors built from integer pairs (no trigonometry).
pub const DIRECTIONS: [(i64, i64); 16] = [
    (1, 0),
    (2, 1),
    (1, 1),
    (1, 2),
    (0, 1),
    (-1, 2),
    (-1, 1),
    (-2, 1),
    (-1, 0),
    (-2, -1),
    (-1, -1),
    (-1, -2),
    (0, -1),
    (1, -2),
    (1, 1),
    (2, -1),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_area_close_to_continuous() {
        let mut m = BinaryMask::new(64, 64);
        paint_disk(&mut m, 32.0, 32.0, 12.0);
        let area = m.count_true() as f64;
        let expect = std::f64::consts::PI * 144.0;
        assert!((area - expect).abs() / expect < 0.05, "area {area} vs {expect}");
    }

    #[test]
    fn bar_splits_disk() {
        let mut m = BinaryMask::new(64, 64);
        paint_disk(&mut m, 32.0, 32.0, 15.0);
        clear_bar(&mut m, 32.0, 32.0, (1, 0), 2.5);
        // Count connected components by flood fill.
        let mut seen = vec![false; 64 * 64];
        let mut components = 0;
        for start in 0..64 * 64 {
            if seen[start] || !m.data()[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (y, x) = (p / 64, p % 64);
                for (dy, dx) in [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)] {
                    let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                    if yy < 0 || yy >= 64 || xx < 0 || xx >= 64 {
                        continue;
                    }
                    let q = yy as usize * 64 + xx as usize;
                    if !seen[q] && m.data()[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        assert_eq!(components, 2);
    }
}
