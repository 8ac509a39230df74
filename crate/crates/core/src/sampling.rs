//! Balanced pixel sampling over labeled scenes.
//!
//! Classes are heavily imbalanced in orchard imagery, so training instances
//! are drawn balanced: exactly `floor(n/2)` fruit and `ceil(n/2)` non-fruit
//! pixels, uniform over all pixels of each class across the scene set.

use crate::error::{CoreError, Result};
use crate::raster::{BinaryMask, Image};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A pixel-labeled image plus its per-image capture metadata.
#[derive(Clone, Debug)]
pub struct LabeledScene {
    pub image: Image,
    pub mask: BinaryMask,
    pub row_id: usize,
    pub sun_azimuth: f64,
}

/// One sampled training pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelSample {
    pub scene: usize,
    pub y: usize,
    pub x: usize,
    pub fruit: bool,
}

/// Draws exactly `floor(n/2)` fruit and `ceil(n/2)` non-fruit pixels.
///
/// Fruit pixels are indexed per scene (they are the minority class);
/// non-fruit pixels are drawn by rejection. Errors when either class is
/// absent from the scene set.
pub fn sample_balanced(
    scenes: &[LabeledScene],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PixelSample>> {
    if scenes.is_empty() {
        return Err(CoreError::Sampling("no scenes to sample from".into()));
    }
    // Per-scene fruit pixel index and cumulative totals.
    let mut fruit_lists: Vec<Vec<u32>> = Vec::with_capacity(scenes.len());
    let mut fruit_cum: Vec<u64> = Vec::with_capacity(scenes.len());
    let mut nonfruit_cum: Vec<u64> = Vec::with_capacity(scenes.len());
    let mut fruit_total = 0u64;
    let mut nonfruit_total = 0u64;
    for scene in scenes {
        let w = scene.mask.width();
        let list: Vec<u32> = scene
            .mask
            .data()
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| if v { Some(i as u32) } else { None })
            .collect();
        let pixels = (scene.mask.height() * w) as u64;
        fruit_total += list.len() as u64;
        nonfruit_total += pixels - list.len() as u64;
        fruit_cum.push(fruit_total);
        nonfruit_cum.push(nonfruit_total);
        fruit_lists.push(list);
    }
    if fruit_total == 0 || nonfruit_total == 0 {
        return Err(CoreError::Sampling(format!(
            "balanced sampling needs both classes (fruit pixels: {fruit_total}, non-fruit: {nonfruit_total})"
        )));
    }

    let n_fruit = n / 2;
    let n_nonfruit = n - n_fruit;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n_fruit {
        let pick = rng.random_range(0..fruit_total);
        let scene = fruit_cum.partition_point(|&c| c <= pick);
        let before = if scene == 0 { 0 } else { fruit_cum[scene - 1] };
        let idx = fruit_lists[scene][(pick - before) as usize] as usize;
        let w = scenes[scene].mask.width();
        out.push(PixelSample {
            scene,
            y: idx / w,
            x: idx % w,
            fruit: true,
        });
    }
    for _ in 0..n_nonfruit {
        let pick = rng.random_range(0..nonfruit_total);
        let scene = nonfruit_cum.partition_point(|&c| c <= pick);
        let (h, w) = (scenes[scene].mask.height(), scenes[scene].mask.width());
        // Rejection within the scene; non-fruit dominates, so this is short.
        loop {
            let y = rng.random_range(0..h);
            let x = rng.random_range(0..w);
            if !scenes[scene].mask.get(y, x) {
                out.push(PixelSample {
                    scene,
                    y,
                    x,
                    fruit: false,
                });
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_with_stripe(h: usize, w: usize, fruit_rows: std::ops::Range<usize>) -> LabeledScene {
        let mut mask = BinaryMask::new(h, w);
        for y in fruit_rows {
            for x in 0..w {
                mask.set(y, x, true);
            }
        }
        LabeledScene {
            image: Image::new(h, w),
            mask,
            row_id: 0,
            sun_azimuth: 90.0,
        }
    }

    #[test]
    fn exact_class_counts() {
        let scenes = vec![scene_with_stripe(16, 16, 0..4), scene_with_stripe(16, 16, 2..9)];
        let mut rng = crate::rng::stream(1, "sampler", 0);
        for n in [1usize, 2, 7, 100] {
            let samples = sample_balanced(&scenes, n, &mut rng).unwrap();
            let fruit = samples.iter().filter(|s| s.fruit).count();
            assert_eq!(fruit, n / 2);
            assert_eq!(samples.len() - fruit, n - n / 2);
            for s in &samples {
                assert_eq!(scenes[s.scene].mask.get(s.y, s.x), s.fruit);
            }
        }
    }

    #[test]
    fn absent_class_is_sampling_error() {
        let empty = vec![scene_with_stripe(8, 8, 0..0)];
        let mut rng = crate::rng::stream(1, "sampler", 1);
        assert!(matches!(
            sample_balanced(&empty, 10, &mut rng),
            Err(CoreError::Sampling(_))
        ));
        let full = vec![scene_with_stripe(8, 8, 0..8)];
        assert!(sample_balanced(&full, 10, &mut rng).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let scenes = vec![scene_with_stripe(32, 32, 5..11)];
        let a = sample_balanced(&scenes, 64, &mut crate::rng::stream(9, "s", 2)).unwrap();
        let b = sample_balanced(&scenes, 64, &mut crate::rng::stream(9, "s", 2)).unwrap();
        assert_eq!(a, b);
    }
}
