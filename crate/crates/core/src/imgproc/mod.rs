//! Image preprocessing: resizing, Gaussian smoothing, colour-space
//! conversion, thresholding, binary morphology, augmentation and class
//! balancing.
//!
//! Pixels are stored as `f32` in row-major height × width × channels order.
//! RGB and gray values lie in `[0, 1]`; HSV images carry hue in degrees
//! `[0, 360)` and saturation/value in `[0, 1]`.

mod augment;
mod blur;
mod color;
mod morph;
mod resize;
mod threshold;

use std::path::Path;

use crate::error::{invalid, Result};

pub use augment::{balance_class, plan_balance, random_ops, AugmentOp, BalanceEntry};
pub use blur::{gaussian_blur, gaussian_kernel, DEFAULT_BLUR_KERNEL, DEFAULT_BLUR_SIGMA};
pub use color::{hsv_to_rgb, hsv_to_rgb_pixel, rgb_to_gray, rgb_to_hsv, rgb_to_hsv_pixel};
pub use morph::{morphology, MorphOp};
pub use resize::resize;
pub use threshold::{threshold, ChannelRange, ColorSpace, ThresholdPreset};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("image must be at least 1×1, got {width}×{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(invalid(format!(
                "{width}×{height}×{channels} image needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Every pixel set to `pixel` (whose length gives the channel count).
    pub fn filled(width: usize, height: usize, pixel: &[f32]) -> Result<Self> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize) -> Vec<f32>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                if px.len() != channels {
                    return Err(invalid("pixel function returned the wrong channel count"));
                }
                data.extend(px);
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let at = (y * self.width + x) * self.channels;
        &self.data[at..at + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let at = (y * self.width + x) * self.channels;
        &mut self.data[at..at + self.channels]
    }

    /// Pixel at clamped integer coordinates (edge replication).
    pub(crate) fn clamped(&self, x: isize, y: isize) -> &[f32] {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixel(cx, cy)
    }

    /// Bilinear sample at continuous pixel-centre coordinates with edge replication.
    pub(crate) fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f32]) {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let p00 = self.clamped(x0, y0);
        let p10 = self.clamped(x0 + 1, y0);
        let p01 = self.clamped(x0, y0 + 1);
        let p11 = self.clamped(x0 + 1, y0 + 1);
        for c in 0..self.channels {
            let top = p00[c] + (p10[c] - p00[c]) * fx;
            let bottom = p01[c] + (p11[c] - p01[c]) * fx;
            out[c] = top + (bottom - top) * fy;
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn is_binary(&self) -> bool {
        self.channels == 1 && self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Decode a PNG or JPEG file as RGB in `[0, 1]`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let rgb = image::open(path)?.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        Self::new(w as usize, h as usize, 3, data)
    }

    /// 8-bit quantization, `round(clamp(v, 0, 1) · 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Write an 8-bit PNG (gray for one channel, RGB for three).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.to_bytes(),
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}
