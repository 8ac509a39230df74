//! PNG encoding of images, masks and probability maps.

use super::atomic_write;
use crate::error::{CoreError, Result};
use crate::raster::{BinaryMask, Image, ProbMap};
use image::{DynamicImage, ImageBuffer, ImageEncoder, Luma};
use std::path::Path;

fn encode_png(width: u32, height: u32, color: image::ExtendedColorType, raw: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(raw, width, height, color)
        .map_err(|e| CoreError::Parse {
            path: "<png encode>".into(),
            message: e.to_string(),
        })?;
    Ok(out)
}

fn load_png(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))
}

/// 8-bit RGB PNG; unit-interval channels quantized by rounding.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let raw: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let bytes = encode_png(
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        &raw,
    )?;
    atomic_write(path, &bytes)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let img = load_png(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = img.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
    Image::from_data(h, w, data)
}

/// 8-bit grayscale PNG with values 0/255.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let raw: Vec<u8> = mask.data().iter().map(|&v| if v { 255 } else { 0 }).collect();
    let bytes = encode_png(
        mask.width() as u32,
        mask.height() as u32,
        image::ExtendedColorType::L8,
        &raw,
    )?;
    atomic_write(path, &bytes)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = load_png(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<bool> = img.as_raw().iter().map(|&v| v > 127).collect();
    BinaryMask::from_data(h, w, data)
}

/// 16-bit grayscale PNG; probabilities quantized by rounding to 65535 steps.
pub fn write_probmap(path: &Path, map: &ProbMap) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(
        map.width() as u32,
        map.height() as u32,
        |x, y| {
            let v = map.get(y as usize, x as usize).clamp(0.0, 1.0);
            Luma([(f64::from(v) * 65535.0).round() as u16])
        },
    );
    let mut bytes = Vec::new();
    DynamicImage::ImageLuma16(buf)
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))?;
    atomic_write(path, &bytes)
}

pub fn read_probmap(path: &Path) -> Result<ProbMap> {
    let img = load_png(path)?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = img
        .as_raw()
        .iter()
        .map(|&v| (f64::from(v) / 65535.0) as f32)
        .collect();
    ProbMap::from_data(h, w, data)
}

/// Draws a circle outline on an RGB image (midpoint algorithm); used for
/// detection overlays.
pub fn draw_circle(img: &mut Image, cy: f64, cx: f64, radius: f64, color: [f32; 3]) {
    let r = radius.round().max(1.0) as i64;
    let (h, w) = (img.height() as i64, img.width() as i64);
    let (cy, cx) = (cy.round() as i64, cx.round() as i64);
    let mut x = r;
    let mut y = 0i64;
    let mut err = 1 - r;
    while y <= x {
        for &(a, b) in &[
            (x, y),
            (y, x),
            (-y, x),
            (-x, y),
            (-x, -y),
            (-y, -x),
            (y, -x),
            (x, -y),
        ] {
            let (py, px) = (cy + a, cx + b);
            if py >= 0 && py < h && px >= 0 && px < w {
                img.set_pixel(py as usize, px as usize, color);
            }
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("orchard-png-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn image_roundtrip_within_quantization() {
        let dir = tmpdir("img");
        let mut rng = crate::rng::stream(1, "png", 0);
        let mut img = Image::new(13, 17);
        for v in img.data_mut() {
            *v = rng.random::<f32>();
        }
        let path = dir.join("a.png");
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn mask_roundtrip_exact() {
        let dir = tmpdir("mask");
        let mut rng = crate::rng::stream(2, "png", 0);
        let mut mask = BinaryMask::new(9, 21);
        for v in mask.data_mut() {
            *v = rng.random::<f64>() < 0.5;
        }
        let path = dir.join("m.png");
        write_mask(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn probmap_quantization_error_bounded() {
        let dir = tmpdir("prob");
        let mut rng = crate::rng::stream(3, "png", 0);
        let mut map = ProbMap::new(16, 16);
        for v in map.data_mut() {
            *v = rng.random::<f32>();
        }
        let path = dir.join("p.png");
        write_probmap(&path, &map).unwrap();
        let back = read_probmap(&path).unwrap();
        for (a, b) in map.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() <= 1.0 / 65535.0, "{a} vs {b}");
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn probmap_quantization_keeps_f1_stable() {
        // Re-evaluating a thresholded score through the 16-bit store must
        // not move F1 materially.
        let dir = tmpdir("prob-f1");
        let mut rng = crate::rng::stream(4, "png", 0);
        let mut map = ProbMap::new(48, 48);
        let mut gt = BinaryMask::new(48, 48);
        for i in 0..48 * 48 {
            let truth = rng.random::<f64>() < 0.3;
            gt.data_mut()[i] = truth;
            let p: f32 = if truth {
                0.5 + 0.5 * rng.random::<f32>()
            } else {
                0.5 * rng.random::<f32>()
            };
            map.data_mut()[i] = p;
        }
        let before = crate::evaluate::pixel_prf(&map, &gt, 0.5, 0).unwrap().f1;
        let path = dir.join("q.png");
        write_probmap(&path, &map).unwrap();
        let back = read_probmap(&path).unwrap();
        let after = crate::evaluate::pixel_prf(&back, &gt, 0.5, 0).unwrap().f1;
        assert!((before - after).abs() < 0.001, "{before} vs {after}");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
