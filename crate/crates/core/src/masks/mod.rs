//! Binary conditioning masks and the raster operations that build them.

mod augment;
mod hair;
mod morph;

pub use augment::{augment_reference, head_crop, recompose_background, scale_foreground, AugmentSpec};
pub use hair::{align_hair_mask, compose_cloth_mask, shoulder_rects, ShoulderRectSpec};
pub use morph::{block_mask, block_mask_with, dilate, dilate_with, BlockSpec};

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, RgbImage};

use crate::error::{Error, Result};

/// Row-major binary raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        let mut m = Self::zeros(width, height);
        m.bits.fill(true);
        m
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Mask { width, height, bits }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as unset.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_size(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_size(&self, other: &Mask) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.same_size(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    /// Inclusive `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }

    /// Mean position of set pixel centers.
    pub fn centroid(&self) -> Option<[f64; 2]> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| [sx / n as f64, sy / n as f64])
    }

    /// Thresholds a grayscale raster at one half (`v >= 128`).
    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        Mask::from_fn(w as usize, h as usize, |x, y| {
            img.get_pixel(x as u32, y as u32)[0] >= 128
        })
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| image_error(path, e))?;
        Ok(Mask::from_gray(&img.to_luma8()))
    }

    pub fn to_png_bytes(&self) -> Vec<u8> {
        encode_png(&image::DynamicImage::ImageLuma8(self.to_gray()))
    }
}

pub(crate) fn image_error(path: &Path, e: image::ImageError) -> Error {
    Error::Image {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    Ok(image::open(path).map_err(|e| image_error(path, e))?.to_rgb8())
}

pub fn rgb_png_bytes(img: &RgbImage) -> Vec<u8> {
    encode_png(&image::DynamicImage::ImageRgb8(img.clone()))
}

fn encode_png(img: &image::DynamicImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_and_threshold() {
        let m = Mask::from_fn(7, 5, |x, y| (x + 2 * y) % 3 == 0);
        let bytes = m.to_png_bytes();
        let img = image::load_from_memory(&bytes).unwrap().to_luma8();
        assert_eq!(Mask::from_gray(&img), m);
        let soft = GrayImage::from_fn(3, 1, |x, _| Luma([[127, 128, 200][x as usize]]));
        assert_eq!(Mask::from_gray(&soft).bits(), &[false, true, true]);
    }

    #[test]
    fn bounding_box_and_centroid() {
        let mut m = Mask::zeros(10, 10);
        assert_eq!(m.bounding_box(), None);
        m.set(2, 3, true);
        m.set(6, 4, true);
        assert_eq!(m.bounding_box(), Some((2, 3, 6, 4)));
        assert_eq!(m.centroid(), Some([4.5, 4.0]));
    }
}
