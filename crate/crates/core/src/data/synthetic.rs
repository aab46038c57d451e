//! Procedural "textured blob" images for exercising the training pipeline
//! without a real dataset.
//!
//! Every image has a noisy background and one elliptical blob. The class
//! decides the blob texture: horizontal stripes, vertical stripes or a
//! checkerboard. Blob colour, size, position and stripe phase are random, so
//! texture is the only reliable cue.

use std::fs;
use std::path::Path;

use super::LabelMap;
use crate::error::{invalid, Result};
use crate::imgproc::{hsv_to_rgb_pixel, Image};
use crate::rng::Rng;

pub const TEXTURES: [&str; 3] = ["Horizontal Stripes", "Vertical Stripes", "Checkerboard"];

pub fn labels() -> LabelMap {
    LabelMap::new(TEXTURES.iter().map(|s| s.to_string()).collect()).expect("static labels are valid")
}

/// One `size × size` RGB image of texture class `class` (0, 1 or 2).
pub fn blob(class: usize, size: usize, rng: &mut Rng) -> Result<Image> {
    if class >= TEXTURES.len() {
        return Err(invalid(format!("synthetic class {class} outside 0..3")));
    }
    let s = size as f64;
    let cx = rng.uniform(0.35, 0.65) * s;
    let cy = rng.uniform(0.35, 0.65) * s;
    let rx = rng.uniform(0.25, 0.35) * s;
    let ry = rng.uniform(0.25, 0.35) * s;
    let period = (size / 4).max(4) as f64;
    let phase = rng.uniform(0.0, period);
    let hue = rng.uniform(0.0, 360.0);
    let fg = hsv_to_rgb_pixel([hue, rng.uniform(0.5, 0.9), rng.uniform(0.75, 1.0)]);
    let dark = hsv_to_rgb_pixel([hue, rng.uniform(0.5, 0.9), rng.uniform(0.1, 0.3)]);
    let bg = hsv_to_rgb_pixel([rng.uniform(0.0, 360.0), rng.uniform(0.0, 0.4), rng.uniform(0.3, 0.6)]);
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
            let base = if dx * dx + dy * dy <= 1.0 {
                let band = |v: f64| ((v + phase) / (period / 2.0)).floor() as i64 % 2 == 0;
                let on = match class {
                    0 => band(y as f64),
                    1 => band(x as f64),
                    _ => band(x as f64) ^ band(y as f64),
                };
                if on {
                    fg
                } else {
                    dark
                }
            } else {
                bg
            };
            for v in base {
                data.push((v + rng.uniform(-0.05, 0.05)).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Image::new(size, size, 3, data)
}

/// `per_class` images for each of the three classes, class-major order.
pub fn dataset(per_class: usize, size: usize, seed: u64) -> Result<Vec<(Image, usize)>> {
    let mut out = Vec::with_capacity(per_class * TEXTURES.len());
    for class in 0..TEXTURES.len() {
        for i in 0..per_class {
            let mut rng = Rng::derive(seed, &[class as u64, i as u64]);
            out.push((blob(class, size, &mut rng)?, class));
        }
    }
    Ok(out)
}

/// Write [`dataset`] as a class-per-directory PNG tree under `root`.
pub fn write_tree(root: impl AsRef<Path>, per_class: usize, size: usize, seed: u64) -> Result<LabelMap> {
    let labels = labels();
    for (i, (img, class)) in dataset(per_class, size, seed)?.into_iter().enumerate() {
        let dir = root.as_ref().join(labels.dir_name(class));
        fs::create_dir_all(&dir)?;
        img.save_png(dir.join(format!("{:05}.png", i % per_class)))?;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let a = dataset(4, 32, 9).unwrap();
        let b = dataset(4, 32, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_ne!(a[0].0, a[1].0);
        assert!(a.iter().all(|(img, _)| img.width() == 32 && img.channels() == 3));
    }

    #[test]
    fn tree_scans_back() {
        let dir = tempfile::tempdir().unwrap();
        let labels = write_tree(dir.path(), 5, 16, 1).unwrap();
        let ds = crate::data::scan(dir.path(), &labels).unwrap();
        assert_eq!(ds.class_counts(), vec![5, 5, 5]);
    }
}
