use super::Image;
use crate::error::{invalid, Result};

/// Hexcone RGB → HSV for one pixel; hue in degrees `[0, 360)`.
pub fn rgb_to_hsv_pixel(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, s, max];
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = 60.0 * sector;
    if h >= 360.0 {
        h -= 360.0;
    }
    [h, s, max]
}

pub fn hsv_to_rgb_pixel(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn map_pixels(img: &Image, op: &str, f: fn([f64; 3]) -> [f64; 3]) -> Result<Image> {
    if img.channels() != 3 {
        return Err(invalid(format!("{op} needs a 3-channel image, got {}", img.channels())));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|p| f([p[0] as f64, p[1] as f64, p[2] as f64]).map(|v| v as f32))
        .collect();
    Image::new(img.width(), img.height(), 3, data)
}

pub fn rgb_to_hsv(img: &Image) -> Result<Image> {
    map_pixels(img, "rgb_to_hsv", rgb_to_hsv_pixel)
}

pub fn hsv_to_rgb(img: &Image) -> Result<Image> {
    map_pixels(img, "hsv_to_rgb", hsv_to_rgb_pixel)
}

/// Luma with ITU-R BT.601 weights. One-channel input is returned as is.
pub fn rgb_to_gray(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    Image::new(img.width(), img.height(), 1, data).expect("dimensions come from a valid image")
}
