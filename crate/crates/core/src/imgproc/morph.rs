use std::fmt;
use std::str::FromStr;

use super::Image;
use crate::error::{invalid, Error, Result};

/// Binary morphology with a 3×3 box. Opening erodes then dilates; closing
/// dilates then erodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

impl MorphOp {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Erode => "erode",
            Self::Dilate => "dilate",
            Self::Open => "open",
            Self::Close => "close",
        }
    }
}

impl fmt::Display for MorphOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MorphOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erode" => Ok(Self::Erode),
            "dilate" => Ok(Self::Dilate),
            "open" => Ok(Self::Open),
            "close" => Ok(Self::Close),
            other => Err(invalid(format!(
                "unknown morphology op '{other}' (erode, dilate, open, close)"
            ))),
        }
    }
}

fn box3(mask: &Image, erode: bool) -> Image {
    let mut out = mask.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let mut hit = erode;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let v = mask.clamped(x as isize + dx, y as isize + dy)[0] == 1.0;
                    if erode {
                        hit &= v;
                    } else {
                        hit |= v;
                    }
                }
            }
            out.pixel_mut(x, y)[0] = hit as u8 as f32;
        }
    }
    out
}

pub fn morphology(mask: &Image, op: MorphOp) -> Result<Image> {
    if !mask.is_binary() {
        return Err(invalid("morphology needs a single-channel {0, 1} mask"));
    }
    Ok(match op {
        MorphOp::Erode => box3(mask, true),
        MorphOp::Dilate => box3(mask, false),
        MorphOp::Open => box3(&box3(mask, true), false),
        MorphOp::Close => box3(&box3(mask, false), true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [MorphOp; 4] = [MorphOp::Erode, MorphOp::Dilate, MorphOp::Open, MorphOp::Close];

    #[test]
    fn all_ones_is_fixed() {
        let m = Image::filled(6, 5, &[1.0]).unwrap();
        for op in ALL {
            assert_eq!(morphology(&m, op).unwrap(), m);
        }
    }

    #[test]
    fn open_removes_speckle() {
        let mut m = Image::filled(7, 7, &[0.0]).unwrap();
        m.pixel_mut(3, 3)[0] = 1.0;
        assert!(morphology(&m, MorphOp::Open).unwrap().data().iter().all(|&v| v == 0.0));
        let d = morphology(&m, MorphOp::Dilate).unwrap();
        assert_eq!(d.data().iter().sum::<f32>(), 9.0);
    }

    #[test]
    fn close_fills_hole() {
        let mut m = Image::filled(9, 9, &[0.0]).unwrap();
        for y in 2..7 {
            for x in 2..7 {
                m.pixel_mut(x, y)[0] = 1.0;
            }
        }
        let square = m.clone();
        m.pixel_mut(4, 4)[0] = 0.0;
        assert_eq!(morphology(&m, MorphOp::Close).unwrap(), square);
    }

    #[test]
    fn non_binary_rejected() {
        let m = Image::filled(3, 3, &[0.5]).unwrap();
        assert!(morphology(&m, MorphOp::Erode).is_err());
        let rgb = Image::filled(3, 3, &[1.0, 1.0, 1.0]).unwrap();
        assert!(morphology(&rgb, MorphOp::Erode).is_err());
    }
}
