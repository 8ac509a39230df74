//! Deterministic synthetic-orchard scene generator.
//!
//! Scenes provide the ground truth for desk-scale verification: shaded fruit
//! disks (in three color palettes, so segmentation cannot shortcut on hue
//! alone), foliage occluders reflected in the mask, an illumination gradient
//! tied to image height, and an optional metadata-correlated mode where
//! visually ambiguous blobs are fruit with a probability that depends on
//! their height band.

pub mod orchard;
pub mod shapes;

pub use orchard::{generate_orchard, Orchard, OrchardFrame, OrchardSpec};

use crate::detect::Detection;
use crate::error::{CoreError, Result};
use crate::raster::{BinaryMask, Image};
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use shapes::DIRECTIONS;

/// One fruit color family (mean RGB plus uniform jitter amplitude).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct FruitPalette {
    pub base: [f32; 3],
    pub jitter: f32,
}

/// Fruit-like blobs whose class depends on the image-height band: a blob
/// centered in band `b` (of `bands` equal height bands, 0 = top) is a real
/// fruit with probability interpolated from `top_prob` to `bottom_prob`.
/// Decoys render identically, so height is the only disambiguating signal.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetaCorrelation {
    pub bands: usize,
    pub top_prob: f64,
    pub bottom_prob: f64,
}

impl MetaCorrelation {
    pub fn fruit_prob(&self, cy: f64, height: usize) -> f64 {
        let t = (cy / height as f64).clamp(0.0, 1.0);
        self.top_prob + (self.bottom_prob - self.top_prob) * t
    }
}

/// Scene generation parameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of fruit groups to place.
    pub fruit_count: (usize, usize),
    /// Fruit radius range in pixels.
    pub radius_range: (f64, f64),
    /// Probability that a fruit group is a cluster.
    pub cluster_prob: f64,
    /// Cluster size range (members overlap pairwise).
    pub cluster_size: (usize, usize),
    /// Inclusive range of foliage occluders drawn over the scene.
    pub occluder_count: (usize, usize),
    /// Vertical illumination gradient amplitude (0 disables).
    pub illumination_strength: f32,
    pub palettes: Vec<FruitPalette>,
    pub metadata_correlation: Option<MetaCorrelation>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 96,
            width: 96,
            fruit_count: (2, 5),
            radius_range: (10.0, 28.0),
            cluster_prob: 0.25,
            cluster_size: (2, 3),
            occluder_count: (1, 3),
            illumination_strength: 0.25,
            palettes: vec![
                // Bright red, pink-green and leafy green varieties.
                FruitPalette { base: [0.72, 0.16, 0.12], jitter: 0.06 },
                FruitPalette { base: [0.66, 0.44, 0.28], jitter: 0.06 },
                FruitPalette { base: [0.47, 0.58, 0.24], jitter: 0.05 },
            ],
            metadata_correlation: None,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(CoreError::Parameter("empty scene extents".into()));
        }
        let (rmin, rmax) = self.radius_range;
        if !(rmin > 0.0 && rmax >= rmin) {
            return Err(CoreError::Parameter("radius range must be positive".into()));
        }
        if 2.0 * rmax >= self.height.min(self.width) as f64 {
            return Err(CoreError::Parameter(format!(
                "fruit diameter up to {} does not fit a {}x{} image",
                2.0 * rmax,
                self.height,
                self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.cluster_prob) {
            return Err(CoreError::Parameter("cluster probability in [0,1]".into()));
        }
        if self.fruit_count.1 < self.fruit_count.0 || self.cluster_size.1 < self.cluster_size.0 {
            return Err(CoreError::Parameter("inverted count range".into()));
        }
        if self.palettes.is_empty() {
            return Err(CoreError::Parameter("need at least one palette".into()));
        }
        if let Some(mc) = &self.metadata_correlation {
            if mc.bands == 0
                || !(0.0..=1.0).contains(&mc.top_prob)
                || !(0.0..=1.0).contains(&mc.bottom_prob)
            {
                return Err(CoreError::Parameter("bad metadata correlation".into()));
            }
        }
        Ok(())
    }
}

/// Ground truth for one generated scene.
#[derive(Clone, Debug)]
pub struct SceneTruth {
    pub mask: BinaryMask,
    /// Real fruits (circle annotations).
    pub annotations: Vec<Detection>,
    /// Identically rendered non-fruit blobs (metadata-correlated mode only).
    pub decoys: Vec<Detection>,
    /// Pixels painted over by occluders (excluded from coverage checks).
    pub occluded: BinaryMask,
}

impl SceneTruth {
    pub fn fruit_count(&self) -> usize {
        self.annotations.len()
    }
}

pub(crate) struct Blob {
    pub cy: f64,
    pub cx: f64,
    pub r: f64,
    pub palette: usize,
    pub tint: f32,
    pub is_fruit: bool,
}

fn far_from_all(blobs: &[Blob], cy: f64, cx: f64, r: f64, gap: f64) -> bool {
    blobs.iter().all(|b| {
        let (dy, dx) = (cy - b.cy, cx - b.cx);
        (dy * dy + dx * dx).sqrt() >= b.r + r + gap
    })
}

fn shade_at(dy: f64, dx: f64, r: f64) -> f32 {
    // Radial shading with a top-left highlight offset; smooth profile is the
    // cue distinguishing fruit from foliage speckle.
    let d2 = ((dy + 0.3 * r) * (dy + 0.3 * r) + (dx + 0.3 * r) * (dx + 0.3 * r)) / (r * r * 1.69);
    (1.15 - 0.55 * d2.min(1.0)) as f32
}

pub(crate) fn paint_blob(image: &mut Image, blob: &Blob, palette: &FruitPalette) {
    let (h, w) = (image.height() as i64, image.width() as i64);
    let (cy, cx, r) = (blob.cy, blob.cx, blob.r);
    let y0 = ((cy - r).floor() as i64).max(0);
    let y1 = ((cy + r).ceil() as i64).min(h - 1);
    let x0 = ((cx - r).floor() as i64).max(0);
    let x1 = ((cx + r).ceil() as i64).min(w - 1);
    let tint = blob.tint;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            if dy * dy + dx * dx > r * r {
                continue;
            }
            let s = shade_at(dy, dx, r);
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                px[c] = ((palette.base[c] + tint) * s).clamp(0.0, 1.0);
            }
            image.set_pixel(y as usize, x as usize, px);
        }
    }
}

/// Deterministic scene synthesis: identical `(spec, seed)` pairs give
/// bit-identical images and truth.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<(Image, SceneTruth)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = rng::stream(seed, "scene", 0);
    let mut image = Image::new(h, w);
    let mut mask = BinaryMask::new(h, w);
    paint_background(&mut image, &mut rng);

    // Fruit groups (and ambiguous blobs in the metadata-correlated mode).
    let n_groups = rng.random_range(spec.fruit_count.0..=spec.fruit_count.1);
    let (rmin, rmax) = spec.radius_range;
    let mut blobs: Vec<Blob> = Vec::new();
    for _ in 0..n_groups {
        let r = rmin + (rmax - rmin) * rng.random::<f64>();
        let margin = r + 1.0;
        let mut placed = false;
        for _attempt in 0..40 {
            let cy = margin + (h as f64 - 2.0 * margin) * rng.random::<f64>();
            let cx = margin + (w as f64 - 2.0 * margin) * rng.random::<f64>();
            if !far_from_all(&blobs, cy, cx, r, 3.0) {
                continue;
            }
            let palette = rng.random_range(0..spec.palettes.len());
            let tint =
                (rng.random::<f32>() - 0.5) * 2.0 * spec.palettes[palette].jitter;
            let is_fruit = match &spec.metadata_correlation {
                Some(mc) => rng.random::<f64>() < mc.fruit_prob(cy, h),
                None => true,
            };
            let clustered = spec.cluster_prob > 0.0 && rng.random::<f64>() < spec.cluster_prob;
            blobs.push(Blob { cy, cx, r, palette, tint, is_fruit });
            if clustered {
                let extra = rng.random_range(spec.cluster_size.0..=spec.cluster_size.1) - 1;
                let mut prev = (cy, cx, r);
                for _ in 0..extra {
                    let dir = DIRECTIONS[rng.random_range(0..DIRECTIONS.len())];
                    let len = ((dir.0 * dir.0 + dir.1 * dir.1) as f64).sqrt();
                    let r2 = rmin + (rmax - rmin) * rng.random::<f64>();
                    let sep = (0.95 + 0.35 * rng.random::<f64>()) * (prev.2 + r2) / 2.0 * 1.15;
                    let cy2 = prev.0 + dir.0 as f64 / len * sep;
                    let cx2 = prev.1 + dir.1 as f64 / len * sep;
                    if cy2 < r2 || cy2 >= h as f64 - r2 || cx2 < r2 || cx2 >= w as f64 - r2 {
                        continue;
                    }
                    blobs.push(Blob { cy: cy2, cx: cx2, r: r2, palette, tint, is_fruit });
                    prev = (cy2, cx2, r2);
                }
            }
            placed = true;
            break;
        }
        if !placed {
            continue;
        }
    }
    let mut annotations = Vec::new();
    let mut decoys = Vec::new();
    for blob in &blobs {
        paint_blob(&mut image, blob, &spec.palettes[blob.palette]);
        let det = Detection {
            row: blob.cy,
            col: blob.cx,
            radius: blob.r,
            score: None,
        };
        if blob.is_fruit {
            shapes::paint_disk(&mut mask, blob.cy, blob.cx, blob.r);
            annotations.push(det);
        } else {
            decoys.push(det);
        }
    }

    let mut occluded = BinaryMask::new(h, w);
    let n_occ = rng.random_range(spec.occluder_count.0..=spec.occluder_count.1);
    paint_occluders(&mut image, &mut mask, &mut occluded, &mut rng, n_occ);
    apply_illumination(&mut image, spec.illumination_strength);

    Ok((
        image,
        SceneTruth {
            mask,
            annotations,
            decoys,
            occluded,
        },
    ))
}

/// Foliage background: per-pixel speckle plus leaf blobs.
pub(crate) fn paint_background(image: &mut Image, rng: &mut ChaCha8Rng) {
    let (h, w) = (image.height(), image.width());
    for y in 0..h {
        for x in 0..w {
            let n = rng.random::<f32>();
            image.set_pixel(y, x, [0.16 + 0.10 * n, 0.30 + 0.14 * n, 0.12 + 0.08 * n]);
        }
    }
    let leaf_count = (h * w) / 160;
    for _ in 0..leaf_count {
        let cy = rng.random_range(0..h) as f64;
        let cx = rng.random_range(0..w) as f64;
        let r = 1.5 + 2.5 * rng.random::<f64>();
        let g = 0.26 + 0.28 * rng.random::<f32>();
        let dark = 0.55 + 0.45 * rng.random::<f32>();
        let y0 = ((cy - r).floor() as i64).max(0);
        let y1 = ((cy + r).ceil() as i64).min(h as i64 - 1);
        let x0 = ((cx - r).floor() as i64).max(0);
        let x1 = ((cx + r).ceil() as i64).min(w as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                if dy * dy + dx * dx <= r * r {
                    image.set_pixel(y as usize, x as usize, [0.13 * dark, g * dark, 0.10 * dark]);
                }
            }
        }
    }
}

/// Draws `count` foliage bars over the image and clears them in the mask.
pub(crate) fn paint_occluders(
    image: &mut Image,
    mask: &mut BinaryMask,
    occluded: &mut BinaryMask,
    rng: &mut ChaCha8Rng,
    count: usize,
) {
    let (h, w) = (image.height(), image.width());
    for _ in 0..count {
        let cy = rng.random_range(0..h) as i64;
        let cx = rng.random_range(0..w) as i64;
        let dir = DIRECTIONS[rng.random_range(0..DIRECTIONS.len())];
        let len = ((dir.0 * dir.0 + dir.1 * dir.1) as f64).sqrt();
        let steps = rng.random_range(8..26);
        let half_w = 1.0 + 1.2 * rng.random::<f64>();
        let shade = 0.5 + 0.4 * rng.random::<f32>();
        for t in -steps..=steps {
            let py = cy as f64 + dir.0 as f64 / len * t as f64;
            let px = cx as f64 + dir.1 as f64 / len * t as f64;
            let y0 = ((py - half_w).floor() as i64).max(0);
            let y1 = ((py + half_w).ceil() as i64).min(h as i64 - 1);
            let x0 = ((px - half_w).floor() as i64).max(0);
            let x1 = ((px + half_w).ceil() as i64).min(w as i64 - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (dy, dx) = (y as f64 - py, x as f64 - px);
                    if dy * dy + dx * dx <= half_w * half_w {
                        image.set_pixel(
                            y as usize,
                            x as usize,
                            [0.20 * shade, 0.30 * shade, 0.12 * shade],
                        );
                        mask.set(y as usize, x as usize, false);
                        occluded.set(y as usize, x as usize, true);
                    }
                }
            }
        }
    }
}

/// Vertical illumination gradient; the top of the image is brighter.
pub(crate) fn apply_illumination(image: &mut Image, strength: f32) {
    if strength <= 0.0 {
        return;
    }
    let (h, w) = (image.height(), image.width());
    for y in 0..h {
        let g = 1.0 + strength * (0.5 - y as f32 / (h.max(2) - 1) as f32);
        for x in 0..w {
            let mut px = image.pixel(y, x);
            for c in &mut px {
                *c = (*c * g).clamp(0.0, 1.0);
            }
            image.set_pixel(y, x, px);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fruit_scene_is_all_background() {
        let spec = SceneSpec {
            fruit_count: (0, 0),
            occluder_count: (0, 0),
            ..SceneSpec::default()
        };
        let (_, truth) = generate_scene(&spec, 7).unwrap();
        assert_eq!(truth.fruit_count(), 0);
        assert_eq!(truth.mask.count_true(), 0);
    }

    #[test]
    fn same_spec_and_seed_bit_identical() {
        let spec = SceneSpec::default();
        let (img_a, truth_a) = generate_scene(&spec, 42).unwrap();
        let (img_b, truth_b) = generate_scene(&spec, 42).unwrap();
        assert_eq!(img_a, img_b);
        assert_eq!(truth_a.mask, truth_b.mask);
        assert_eq!(truth_a.annotations, truth_b.annotations);
        let (img_c, _) = generate_scene(&spec, 43).unwrap();
        assert_ne!(img_a, img_c);
    }

    #[test]
    fn mask_area_tracks_disk_area_sum() {
        // Non-overlapping fruits, no occluders: the mask area must be within
        // 5% of the summed continuous disk areas.
        let spec = SceneSpec {
            height: 220,
            width: 220,
            fruit_count: (10, 10),
            radius_range: (10.0, 16.0),
            cluster_prob: 0.0,
            occluder_count: (0, 0),
            illumination_strength: 0.0,
            ..SceneSpec::default()
        };
        let (_, truth) = generate_scene(&spec, 5).unwrap();
        assert_eq!(truth.fruit_count(), 10);
        let expected: f64 = truth
            .annotations
            .iter()
            .map(|a| std::f64::consts::PI * a.radius * a.radius)
            .sum();
        let area = truth.mask.count_true() as f64;
        assert!(
            (area - expected).abs() / expected < 0.05,
            "area {area} vs {expected}"
        );
    }

    #[test]
    fn annotation_interiors_are_mask_true() {
        let spec = SceneSpec::default();
        for seed in 0..10 {
            let (_, truth) = generate_scene(&spec, seed).unwrap();
            let (h, w) = (truth.mask.height(), truth.mask.width());
            let mut interior = 0u64;
            let mut covered = 0u64;
            for a in &truth.annotations {
                let r = a.radius;
                for y in (a.row - r).floor() as i64..=(a.row + r).ceil() as i64 {
                    for x in (a.col - r).floor() as i64..=(a.col + r).ceil() as i64 {
                        if y < 0 || y >= h as i64 || x < 0 || x >= w as i64 {
                            continue;
                        }
                        if truth.occluded.get(y as usize, x as usize) {
                            continue;
                        }
                        let (dy, dx) = (y as f64 - a.row, x as f64 - a.col);
                        if dy * dy + dx * dx <= r * r {
                            interior += 1;
                            if truth.mask.get(y as usize, x as usize) {
                                covered += 1;
                            }
                        }
                    }
                }
            }
            if interior > 0 {
                // Occluders erase some interior pixels; with the default
                // density at least 95% must survive.
                assert!(
                    covered as f64 >= 0.95 * interior as f64,
                    "coverage {covered}/{interior} at seed {seed}"
                );
            }
        }
    }

    #[test]
    fn oversized_fruit_is_parameter_error() {
        let spec = SceneSpec {
            height: 40,
            width: 40,
            radius_range: (25.0, 30.0),
            ..SceneSpec::default()
        };
        assert!(generate_scene(&spec, 1).is_err());
    }

    #[test]
    fn metadata_correlation_controls_fruit_fraction() {
        let spec = SceneSpec {
            height: 120,
            width: 120,
            fruit_count: (6, 10),
            radius_range: (8.0, 12.0),
            cluster_prob: 0.0,
            occluder_count: (0, 0),
            illumination_strength: 0.0,
            metadata_correlation: Some(MetaCorrelation {
                bands: 8,
                top_prob: 0.9,
                bottom_prob: 0.2,
            }),
            ..SceneSpec::default()
        };
        let mut top = (0u64, 0u64);
        let mut bottom = (0u64, 0u64);
        for seed in 0..300 {
            let (_, truth) = generate_scene(&spec, seed).unwrap();
            for a in truth.annotations.iter() {
                if a.row < 60.0 {
                    top.0 += 1;
                } else {
                    bottom.0 += 1;
                }
            }
            for d in truth.decoys.iter() {
                if d.row < 60.0 {
                    top.1 += 1;
                } else {
                    bottom.1 += 1;
                }
            }
        }
        let top_frac = top.0 as f64 / (top.0 + top.1) as f64;
        let bottom_frac = bottom.0 as f64 / (bottom.0 + bottom.1) as f64;
        // Centers are uniform within the radius margin; the expected fruit
        // fraction per half is the profile mean over the reachable band.
        let margin = (8.0 + 12.0) / 2.0 + 1.0; // mean radius + 1
        let t_lo = margin / 120.0;
        let t_hi = 1.0 - t_lo;
        let expect_top = 0.9 - 0.7 * (t_lo + 0.5) / 2.0;
        let expect_bottom = 0.9 - 0.7 * (0.5 + t_hi) / 2.0;
        assert!((top_frac - expect_top).abs() < 0.05, "top {top_frac} vs {expect_top}");
        assert!(
            (bottom_frac - expect_bottom).abs() < 0.05,
            "bottom {bottom_frac} vs {expect_bottom}"
        );
    }
}
