use std::fmt;
use std::str::FromStr;

use super::Image;
use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

pub const MAX_ROTATION_DEG: f64 = 25.0;
pub const MAX_SHIFT: f64 = 0.10;
pub const MAX_BRIGHTNESS: f64 = 0.20;

/// A single geometric or photometric augmentation. Output dimensions always
/// equal input dimensions; resampled borders replicate the nearest edge pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentOp {
    HFlip,
    VFlip,
    /// Counter-clockwise rotation about the image centre, in degrees.
    Rotate(f64),
    /// Translation as a fraction of width and height.
    Shift(f64, f64),
    /// Multiplicative brightness factor, clamped to `[0, 1]` afterwards.
    Brightness(f64),
}

impl AugmentOp {
    pub fn apply(&self, img: &Image) -> Image {
        let (w, h, c) = (img.width(), img.height(), img.channels());
        match *self {
            Self::HFlip => remap_exact(img, |x, y| (w - 1 - x, y)),
            Self::VFlip => remap_exact(img, |x, y| (x, h - 1 - y)),
            Self::Rotate(deg) => {
                let (sin, cos) = deg.to_radians().sin_cos();
                let cx = (w as f64 - 1.0) / 2.0;
                let cy = (h as f64 - 1.0) / 2.0;
                resample(img, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    (cx + cos * dx - sin * dy, cy + sin * dx + cos * dy)
                })
            }
            Self::Shift(fx, fy) => {
                let (ox, oy) = (fx * w as f64, fy * h as f64);
                resample(img, |x, y| (x - ox, y - oy))
            }
            Self::Brightness(k) => {
                let data = img
                    .data()
                    .iter()
                    .map(|&v| (v * k as f32).clamp(0.0, 1.0))
                    .collect();
                Image::new(w, h, c, data).expect("same dimensions")
            }
        }
    }
}

fn remap_exact(img: &Image, src: impl Fn(usize, usize) -> (usize, usize)) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (sx, sy) = src(x, y);
            out.pixel_mut(x, y).copy_from_slice(img.pixel(sx, sy));
        }
    }
    out
}

fn resample(img: &Image, src: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let mut out = img.clone();
    let mut px = vec![0.0f32; img.channels()];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (sx, sy) = src(x as f64, y as f64);
            img.sample_bilinear(sx, sy, &mut px);
            out.pixel_mut(x, y).copy_from_slice(&px);
        }
    }
    out
}

impl fmt::Display for AugmentOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::HFlip => f.write_str("hflip"),
            Self::VFlip => f.write_str("vflip"),
            Self::Rotate(d) => write!(f, "rotate({d:.2})"),
            Self::Shift(x, y) => write!(f, "shift({x:.3} {y:.3})"),
            Self::Brightness(k) => write!(f, "brightness({k:.3})"),
        }
    }
}

impl FromStr for AugmentOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("unrecognized augmentation '{s}'"));
        match s {
            "hflip" => return Ok(Self::HFlip),
            "vflip" => return Ok(Self::VFlip),
            _ => {}
        }
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args: Vec<f64> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split_whitespace()
            .map(|a| a.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match (name, args.as_slice()) {
            ("rotate", [d]) => Ok(Self::Rotate(*d)),
            ("shift", [x, y]) => Ok(Self::Shift(*x, *y)),
            ("brightness", [k]) => Ok(Self::Brightness(*k)),
            _ => Err(bad()),
        }
    }
}

/// Round to `1/scale`; `k / scale` is the same double that parsing the decimal text yields.
fn quantize(v: f64, scale: f64) -> f64 {
    (v * scale).round() / scale
}

/// One to three distinct augmentations with parameters drawn from `rng`.
/// Parameters are quantized so their text form parses back exactly.
pub fn random_ops(rng: &mut Rng) -> Vec<AugmentOp> {
    let count = 1 + rng.below(3);
    let mut kinds = [0usize, 1, 2, 3, 4];
    rng.shuffle(&mut kinds);
    kinds[..count]
        .iter()
        .map(|&k| match k {
            0 => AugmentOp::HFlip,
            1 => AugmentOp::VFlip,
            2 => AugmentOp::Rotate(quantize(
                rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG),
                100.0,
            )),
            3 => AugmentOp::Shift(
                quantize(rng.uniform(-MAX_SHIFT, MAX_SHIFT), 1000.0),
                quantize(rng.uniform(-MAX_SHIFT, MAX_SHIFT), 1000.0),
            ),
            _ => AugmentOp::Brightness(quantize(
                rng.uniform(1.0 - MAX_BRIGHTNESS, 1.0 + MAX_BRIGHTNESS),
                1000.0,
            )),
        })
        .collect()
}

/// One output slot of a balanced class.
#[derive(Clone, Debug, PartialEq)]
pub enum BalanceEntry {
    Original(usize),
    /// Augmented copy of `source`; `ops` are `random_ops(&mut Rng::new(seed))`.
    Augmented {
        source: usize,
        ops: Vec<AugmentOp>,
        seed: u64,
    },
}

/// Decide which originals to keep and which augmented copies to add so a
/// class of `count` images ends with exactly `target`.
///
/// Above target, a uniform subsample without replacement is kept in original
/// order. Otherwise all originals are kept and augmented copies follow, with
/// sources taken round-robin.
pub fn plan_balance(count: usize, target: usize, seed: u64) -> Result<Vec<BalanceEntry>> {
    if count == 0 {
        return Err(invalid("cannot balance an empty class"));
    }
    if target == 0 {
        return Err(invalid("balance target must be positive"));
    }
    if count >= target {
        let mut keep = Rng::derive(seed, &[0x5AB]).permutation(count);
        keep.truncate(target);
        keep.sort_unstable();
        return Ok(keep.into_iter().map(BalanceEntry::Original).collect());
    }
    let mut plan: Vec<BalanceEntry> = (0..count).map(BalanceEntry::Original).collect();
    let mut seeds = Rng::derive(seed, &[0xA06]);
    for k in 0..target - count {
        let entry_seed = seeds.next_u64();
        plan.push(BalanceEntry::Augmented {
            source: k % count,
            ops: random_ops(&mut Rng::new(entry_seed)),
            seed: entry_seed,
        });
    }
    Ok(plan)
}

pub fn balance_class(images: &[Image], target: usize, seed: u64) -> Result<Vec<Image>> {
    Ok(plan_balance(images.len(), target, seed)?
        .into_iter()
        .map(|entry| match entry {
            BalanceEntry::Original(i) => images[i].clone(),
            BalanceEntry::Augmented { source, ops, .. } => ops
                .iter()
                .fold(images[source].clone(), |img, op| op.apply(&img)),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y| {
            let (u, v) = (x as f32 / w as f32, y as f32 / h as f32);
            vec![
                0.5 + 0.4 * (3.0 * u).sin() * (2.0 * v).cos(),
                0.3 + 0.5 * u * v,
                0.5 + 0.3 * (4.0 * v).sin(),
            ]
        })
        .unwrap()
    }

    #[test]
    fn flips_are_involutions() {
        let img = smooth(13, 9);
        for op in [AugmentOp::HFlip, AugmentOp::VFlip] {
            let once = op.apply(&img);
            assert_ne!(once, img);
            assert_eq!(op.apply(&once), img);
        }
    }

    #[test]
    fn rotate_and_back_is_close() {
        let img = smooth(64, 64);
        for deg in [10.0, -7.5, 25.0] {
            let back = AugmentOp::Rotate(-deg).apply(&AugmentOp::Rotate(deg).apply(&img));
            let mae: f64 = img
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs() as f64)
                .sum::<f64>()
                / img.data().len() as f64;
            assert!(mae <= 2.0 / 255.0, "deg {deg}: {mae}");
        }
    }

    #[test]
    fn zero_parameters_are_identity() {
        let img = smooth(10, 8);
        assert_eq!(AugmentOp::Shift(0.0, 0.0).apply(&img), img);
        assert_eq!(AugmentOp::Brightness(1.0).apply(&img), img);
        let r = AugmentOp::Rotate(0.0).apply(&img);
        for (a, b) in r.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn integer_shift_moves_pixels() {
        let img = smooth(10, 10);
        let out = AugmentOp::Shift(0.1, 0.0).apply(&img);
        assert_eq!(out.pixel(5, 3), img.pixel(4, 3));
        assert_eq!(out.pixel(0, 3), img.pixel(0, 3));
    }

    #[test]
    fn text_form_roundtrips() {
        let mut rng = Rng::new(3);
        for _ in 0..200 {
            for op in random_ops(&mut rng) {
                assert_eq!(op.to_string().parse::<AugmentOp>().unwrap().to_string(), op.to_string());
                match op {
                    AugmentOp::Rotate(d) => assert!(d.abs() <= MAX_ROTATION_DEG),
                    AugmentOp::Shift(x, y) => assert!(x.abs() <= MAX_SHIFT && y.abs() <= MAX_SHIFT),
                    AugmentOp::Brightness(k) => assert!((k - 1.0).abs() <= MAX_BRIGHTNESS + 1e-12),
                    _ => {}
                }
            }
        }
        assert!("spin(3)".parse::<AugmentOp>().is_err());
    }

    #[test]
    fn plan_counts() {
        let plan = plan_balance(952, 2000, 1).unwrap();
        assert_eq!(plan.len(), 2000);
        let originals = plan.iter().filter(|e| matches!(e, BalanceEntry::Original(_))).count();
        assert_eq!(originals, 952);
        assert_eq!(plan[952 + 952], BalanceEntry::Augmented {
            source: 0,
            ops: match &plan[952 + 952] { BalanceEntry::Augmented { ops, .. } => ops.clone(), _ => unreachable!() },
            seed: match &plan[952 + 952] { BalanceEntry::Augmented { seed, .. } => *seed, _ => unreachable!() },
        });

        let sub = plan_balance(3209, 2000, 1).unwrap();
        let idx: Vec<usize> = sub
            .iter()
            .map(|e| match e {
                BalanceEntry::Original(i) => *i,
                _ => panic!("augmented entry in a subsample"),
            })
            .collect();
        assert_eq!(idx.len(), 2000);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(plan_balance(3209, 2000, 1).unwrap(), sub);
        assert_ne!(plan_balance(3209, 2000, 2).unwrap(), sub);

        let fixed = plan_balance(2000, 2000, 9).unwrap();
        assert!(fixed.iter().enumerate().all(|(i, e)| *e == BalanceEntry::Original(i)));
        assert!(plan_balance(0, 2000, 1).is_err());
    }

    #[test]
    fn balance_materializes_plan() {
        let imgs: Vec<Image> = (0..3).map(|i| Image::filled(4, 4, &[i as f32 / 4.0, 0.5, 0.5]).unwrap()).collect();
        let out = balance_class(&imgs, 8, 5).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(&out[..3], &imgs[..]);
        assert_eq!(out, balance_class(&imgs, 8, 5).unwrap());
        assert!(balance_class(&[], 8, 5).is_err());
    }
}
