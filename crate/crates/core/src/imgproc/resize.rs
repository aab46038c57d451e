use super::Image;
use crate::error::{invalid, Result};

/// Bilinear resampling to `width × height` using pixel-centre alignment
/// and edge replication. Same-size input is returned unchanged.
pub fn resize(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(invalid("resize target must be at least 1×1"));
    }
    if width == img.width() && height == img.height() {
        return Ok(img.clone());
    }
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let c = img.channels();
    let mut data = vec![0.0f32; width * height * c];
    for y in 0..height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let at = (y * width + x) * c;
            img.sample_bilinear(src_x, src_y, &mut data[at..at + c]);
        }
    }
    Image::new(width, height, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let img = Image::from_fn(256, 256, 3, |x, y| {
            vec![(x % 7) as f32 / 7.0, (y % 5) as f32 / 5.0, 0.25]
        })
        .unwrap();
        assert_eq!(resize(&img, 256, 256).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image::filled(512, 512, &[0.2, 0.6, 0.9]).unwrap();
        let out = resize(&img, 256, 256).unwrap();
        assert_eq!((out.width(), out.height()), (256, 256));
        for px in out.data().chunks(3) {
            assert!((px[0] - 0.2).abs() < 1e-6 && (px[1] - 0.6).abs() < 1e-6);
            assert!((px[2] - 0.9).abs() < 1e-6);
        }
    }

    #[test]
    fn checkerboard_to_single_pixel_averages() {
        let img = Image::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = resize(&img, 1, 1).unwrap();
        assert!((out.data()[0] - 0.5).abs() <= 1.0 / 255.0);
    }
}
