use std::fmt;
use std::str::FromStr;

use super::{rgb_to_gray, rgb_to_hsv, Image};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Gray,
    Hsv,
    Rgb,
}

impl ColorSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gray => "gray",
            Self::Hsv => "hsv",
            Self::Rgb => "rgb",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            Self::Gray => 1,
            _ => 3,
        }
    }

    fn domain(self, channel: usize) -> (f64, f64) {
        match (self, channel) {
            (Self::Hsv, 0) => (0.0, 360.0),
            _ => (0.0, 1.0),
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" => Ok(Self::Gray),
            "hsv" => Ok(Self::Hsv),
            "rgb" => Ok(Self::Rgb),
            other => Err(invalid(format!("unknown color space '{other}' (gray, hsv, rgb)"))),
        }
    }
}

/// Closed interval `[lo, hi]`. For hue, `lo > hi` wraps through 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRange {
    pub lo: f64,
    pub hi: f64,
}

impl ChannelRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn contains(&self, v: f64) -> bool {
        if self.lo <= self.hi {
            self.lo <= v && v <= self.hi
        } else {
            v >= self.lo || v <= self.hi
        }
    }
}

impl fmt::Display for ChannelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl FromStr for ChannelRange {
    type Err = Error;

    /// `lo:hi`
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("range '{s}' must look like lo:hi")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("range bound '{t}' is not a number")))
        };
        Ok(Self::new(parse(lo)?, parse(hi)?))
    }
}

/// Named HSV segmentation ranges. These are hand-picked defaults, tuned only
/// on synthetic fixtures.
///
/// * `leaf-green`: H 60–150°, S ≥ 0.25, V ≥ 0.2
/// * `lesion-brown`: H 5–35°, S ≥ 0.3, V 0.1–0.75
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdPreset {
    LeafGreen,
    LesionBrown,
}

impl ThresholdPreset {
    pub fn space(self) -> ColorSpace {
        ColorSpace::Hsv
    }

    pub fn ranges(self) -> [ChannelRange; 3] {
        match self {
            Self::LeafGreen => [
                ChannelRange::new(60.0, 150.0),
                ChannelRange::new(0.25, 1.0),
                ChannelRange::new(0.2, 1.0),
            ],
            Self::LesionBrown => [
                ChannelRange::new(5.0, 35.0),
                ChannelRange::new(0.3, 1.0),
                ChannelRange::new(0.1, 0.75),
            ],
        }
    }
}

impl FromStr for ThresholdPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaf-green" => Ok(Self::LeafGreen),
            "lesion-brown" => Ok(Self::LesionBrown),
            other => Err(invalid(format!(
                "unknown threshold preset '{other}' (leaf-green, lesion-brown)"
            ))),
        }
    }
}

/// Binary mask: 1 where every channel of `img`, converted to `space`, lies in its range.
///
/// `img` is RGB, or single-channel when `space` is gray.
pub fn threshold(img: &Image, space: ColorSpace, ranges: &[ChannelRange]) -> Result<Image> {
    if ranges.len() != space.channels() {
        return Err(invalid(format!(
            "{space} thresholding needs {} ranges, got {}",
            space.channels(),
            ranges.len()
        )));
    }
    for (c, r) in ranges.iter().enumerate() {
        let (lo, hi) = space.domain(c);
        if !(r.lo >= lo && r.lo <= hi && r.hi >= lo && r.hi <= hi) {
            return Err(invalid(format!("range {r} on {space} channel {c} leaves [{lo}, {hi}]")));
        }
        let wraps = space == ColorSpace::Hsv && c == 0;
        if r.lo > r.hi && !wraps {
            return Err(invalid(format!("inverted range {r} on {space} channel {c}")));
        }
    }
    let converted = match space {
        ColorSpace::Gray => rgb_to_gray(img),
        ColorSpace::Hsv => rgb_to_hsv(img)?,
        ColorSpace::Rgb if img.channels() == 3 => img.clone(),
        ColorSpace::Rgb => return Err(invalid("rgb thresholding needs a 3-channel image")),
    };
    let n = space.channels();
    let data = converted
        .data()
        .chunks_exact(n)
        .map(|px| {
            let inside = px.iter().zip(ranges).all(|(&v, r)| r.contains(v as f64));
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Image::new(img.width(), img.height(), 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_on_brown() -> Image {
        Image::from_fn(20, 16, 3, |x, y| {
            if (5..12).contains(&x) && (4..10).contains(&y) {
                vec![0.55, 0.7, 0.2]
            } else {
                vec![0.55, 0.35, 0.15]
            }
        })
        .unwrap()
    }

    #[test]
    fn green_range_selects_the_square() {
        let img = square_on_brown();
        let ranges = [
            ChannelRange::new(35.0, 85.0),
            ChannelRange::new(0.25, 1.0),
            ChannelRange::new(0.2, 1.0),
        ];
        let mask = threshold(&img, ColorSpace::Hsv, &ranges).unwrap();
        let p = ThresholdPreset::LeafGreen;
        assert_eq!(threshold(&img, p.space(), &p.ranges()).unwrap(), mask);
        for y in 0..16 {
            for x in 0..20 {
                let want = (5..12).contains(&x) && (4..10).contains(&y);
                assert_eq!(mask.pixel(x, y)[0], want as u8 as f32, "({x},{y})");
            }
        }
        let p = ThresholdPreset::LesionBrown;
        let brown = threshold(&img, p.space(), &p.ranges()).unwrap();
        for (a, b) in mask.data().iter().zip(brown.data()) {
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn inclusive_and_empty_ranges() {
        let img = square_on_brown();
        let all = [ChannelRange::new(0.0, 1.0); 3];
        assert!(threshold(&img, ColorSpace::Rgb, &all).unwrap().data().iter().all(|&v| v == 1.0));
        let mut none = all;
        none[1] = ChannelRange::new(0.99, 0.99);
        assert!(threshold(&img, ColorSpace::Rgb, &none).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inversion_only_allowed_for_hue() {
        let img = square_on_brown();
        let wrap = [
            ChannelRange::new(340.0, 40.0),
            ChannelRange::new(0.0, 1.0),
            ChannelRange::new(0.0, 1.0),
        ];
        let mask = threshold(&img, ColorSpace::Hsv, &wrap).unwrap();
        assert_eq!(mask.pixel(0, 0)[0], 1.0);
        assert_eq!(mask.pixel(6, 5)[0], 0.0);
        let bad = [ChannelRange::new(0.0, 1.0), ChannelRange::new(0.8, 0.2), ChannelRange::new(0.0, 1.0)];
        assert!(threshold(&img, ColorSpace::Hsv, &bad).is_err());
        assert!(threshold(&img, ColorSpace::Rgb, &[ChannelRange::new(0.5, 0.1); 3]).is_err());
        assert!(threshold(&img, ColorSpace::Gray, &[ChannelRange::new(0.0, 2.0)]).is_err());
    }

    #[test]
    fn threshold_on_unit_range_is_idempotent() {
        let img = square_on_brown();
        let p = ThresholdPreset::LeafGreen;
        let mask = threshold(&img, p.space(), &p.ranges()).unwrap();
        let again = threshold(&mask, ColorSpace::Gray, &[ChannelRange::new(1.0, 1.0)]).unwrap();
        assert_eq!(again, mask);
    }

    #[test]
    fn parse_range() {
        assert_eq!("0.2:0.9".parse::<ChannelRange>().unwrap(), ChannelRange::new(0.2, 0.9));
        assert!("0.2".parse::<ChannelRange>().is_err());
    }
}
