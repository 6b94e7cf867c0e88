use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Mask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    /// Uniform bounds for the foreground scale factor.
    pub scale_range: [f64; 2],
    /// Uniform bounds, in degrees, for reference-image rotation.
    pub rotate_range_deg: [f64; 2],
    pub rng_seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            scale_range: [0.95, 1.25],
            rotate_range_deg: [-15.0, 15.0],
            rng_seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scale range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        let [a, b] = self.rotate_range_deg;
        if !(a <= b && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidInput(format!("rotation range [{a}, {b}] is invalid")));
        }
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Bilinear lookup at continuous pixel coordinates (pixel centers on
/// integers), clamping to the border.
fn bilinear(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let px = |xi: i64, yi: i64| img.get_pixel(xi.clamp(0, w - 1) as u32, yi.clamp(0, h - 1) as u32);
    let (xi, yi) = (x0 as i64, y0 as i64);
    if fx == 0.0 && fy == 0.0 {
        return *px(xi, yi);
    }
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let v = (1.0 - fx) * (1.0 - fy) * px(xi, yi)[c] as f64
            + fx * (1.0 - fy) * px(xi + 1, yi)[c] as f64
            + (1.0 - fx) * fy * px(xi, yi + 1)[c] as f64
            + fx * fy * px(xi + 1, yi + 1)[c] as f64;
        *o = v.round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

fn check_rgb_size(img: &RgbImage, mask: &Mask, what: &str) -> Result<()> {
    if img.width() as usize != mask.width() || img.height() as usize != mask.height() {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{}, mask is {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    Ok(())
}

/// Rescales the foreground about its bounding-box center by a factor drawn
/// from `spec.scale_range`, then pastes it over `bg_image`.
///
/// The image is resampled bilinearly and the mask by nearest neighbour.
/// Returns the composite and the rescaled foreground mask.
pub fn scale_foreground(
    fg_mask: &Mask,
    fg_image: &RgbImage,
    bg_image: &RgbImage,
    spec: &AugmentSpec,
) -> Result<(RgbImage, Mask)> {
    spec.validate()?;
    check_rgb_size(fg_image, fg_mask, "foreground image")?;
    check_rgb_size(bg_image, fg_mask, "background image")?;
    let (x0, y0, x1, y1) = fg_mask.bounding_box().ok_or(Error::EmptyForeground)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let factor = sample(&mut rng, spec.scale_range);
    let cx = (x0 + x1 + 1) as f64 / 2.0;
    let cy = (y0 + y1 + 1) as f64 / 2.0;

    let (w, h) = (fg_mask.width(), fg_mask.height());
    let mut mask = Mask::zeros(w, h);
    let mut out = bg_image.clone();
    for y in 0..h {
        for x in 0..w {
            let sx = cx + (x as f64 + 0.5 - cx) / factor;
            let sy = cy + (y as f64 + 0.5 - cy) / factor;
            if fg_mask.get_signed(sx.floor() as i64, sy.floor() as i64) {
                mask.set(x, y, true);
                out.put_pixel(x as u32, y as u32, bilinear(fg_image, sx - 0.5, sy - 0.5));
            }
        }
    }
    Ok((out, mask))
}

/// Randomly scales and rotates an image about its center; uncovered pixels
/// are black.
pub fn augment_reference(image: &RgbImage, spec: &AugmentSpec) -> Result<RgbImage> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let factor = sample(&mut rng, spec.scale_range);
    let angle = sample(&mut rng, spec.rotate_range_deg).to_radians();
    let (w, h) = (image.width(), image.height());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = angle.sin_cos();
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        // inverse rotation, inverse scale
        let sx = cx + (cos * dx + sin * dy) / factor;
        let sy = cy + (-sin * dx + cos * dy) / factor;
        if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
            Rgb([0, 0, 0])
        } else {
            bilinear(image, sx - 0.5, sy - 0.5)
        }
    }))
}

/// Keeps only the head region; everything else is black.
pub fn head_crop(image: &RgbImage, head_mask: &Mask) -> Result<RgbImage> {
    check_rgb_size(image, head_mask, "image")?;
    Ok(RgbImage::from_fn(image.width(), image.height(), |x, y| {
        if head_mask.get(x as usize, y as usize) {
            *image.get_pixel(x, y)
        } else {
            Rgb([0, 0, 0])
        }
    }))
}

/// Puts the frame's clothing back onto an inpainted background.
pub fn recompose_background(inpainted: &RgbImage, frame: &RgbImage, cloth_mask: &Mask) -> Result<RgbImage> {
    check_rgb_size(inpainted, cloth_mask, "inpainted background")?;
    check_rgb_size(frame, cloth_mask, "frame")?;
    Ok(RgbImage::from_fn(frame.width(), frame.height(), |x, y| {
        if cloth_mask.get(x as usize, y as usize) {
            *frame.get_pixel(x, y)
        } else {
            *inpainted.get_pixel(x, y)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> (Mask, RgbImage, RgbImage) {
        let mask = Mask::from_fn(64, 64, |x, y| (20..36).contains(&x) && (24..44).contains(&y));
        let fg = RgbImage::from_fn(64, 64, |x, y| Rgb([(x * 4) as u8, (y * 4) as u8, 200]));
        let bg = RgbImage::from_pixel(64, 64, Rgb([10, 20, 30]));
        (mask, fg, bg)
    }

    fn spec(lo: f64, hi: f64, seed: u64) -> AugmentSpec {
        AugmentSpec {
            scale_range: [lo, hi],
            rng_seed: seed,
            ..AugmentSpec::default()
        }
    }

    #[test]
    fn unit_scale_is_plain_paste() {
        let (mask, fg, bg) = scene();
        let (img, m) = scale_foreground(&mask, &fg, &bg, &spec(1.0, 1.0, 3)).unwrap();
        assert_eq!(m, mask);
        let pasted = RgbImage::from_fn(64, 64, |x, y| {
            if mask.get(x as usize, y as usize) {
                *fg.get_pixel(x, y)
            } else {
                *bg.get_pixel(x, y)
            }
        });
        assert_eq!(img, pasted);
    }

    #[test]
    fn factor_two_doubles_bounding_box() {
        let (mask, fg, bg) = scene();
        let (_, m) = scale_foreground(&mask, &fg, &bg, &spec(2.0, 2.0, 0)).unwrap();
        let (x0, y0, x1, y1) = m.bounding_box().unwrap();
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        assert!(w.abs_diff(32) <= 1 && h.abs_diff(40) <= 1, "{w}x{h}");
    }

    #[test]
    fn seeded_determinism_and_range() {
        let (mask, fg, bg) = scene();
        let a = scale_foreground(&mask, &fg, &bg, &spec(0.8, 1.3, 77)).unwrap();
        let b = scale_foreground(&mask, &fg, &bg, &spec(0.8, 1.3, 77)).unwrap();
        assert_eq!(a, b);
        let r = augment_reference(
            &fg,
            &AugmentSpec {
                rng_seed: 5,
                ..AugmentSpec::default()
            },
        )
        .unwrap();
        assert_eq!(
            r,
            augment_reference(
                &fg,
                &AugmentSpec {
                    rng_seed: 5,
                    ..AugmentSpec::default()
                }
            )
            .unwrap()
        );
    }

    #[test]
    fn empty_foreground_is_an_error() {
        let (_, fg, bg) = scene();
        let empty = Mask::zeros(64, 64);
        assert!(matches!(
            scale_foreground(&empty, &fg, &bg, &spec(1.0, 1.0, 0)),
            Err(Error::EmptyForeground)
        ));
    }

    #[test]
    fn identity_augmentation_keeps_image() {
        let (_, fg, _) = scene();
        let s = AugmentSpec {
            scale_range: [1.0, 1.0],
            rotate_range_deg: [0.0, 0.0],
            rng_seed: 1,
        };
        assert_eq!(augment_reference(&fg, &s).unwrap(), fg);
    }

    #[test]
    fn crop_and_recompose() {
        let (mask, fg, bg) = scene();
        let crop = head_crop(&fg, &mask).unwrap();
        assert_eq!(*crop.get_pixel(0, 0), Rgb([0, 0, 0]));
        assert_eq!(*crop.get_pixel(25, 30), *fg.get_pixel(25, 30));
        let rec = recompose_background(&bg, &fg, &mask).unwrap();
        assert_eq!(*rec.get_pixel(0, 0), *bg.get_pixel(0, 0));
        assert_eq!(*rec.get_pixel(25, 30), *fg.get_pixel(25, 30));
    }
}
