//! Landmark debug renderings.

use image::{Rgb, RgbImage};

use crate::landmarks::LandmarkSet;
use crate::retarget::FeatureIndexConfig;

pub const CANVAS_SIZE: u32 = 512;
const DOT_RADIUS: i64 = 2;
const EYE: Rgb<u8> = Rgb([0, 255, 0]);
const MOUTH: Rgb<u8> = Rgb([255, 0, 0]);
const OTHER: Rgb<u8> = Rgb([255, 255, 255]);

/// Draws each landmark as a filled dot on `base` (or a black canvas).
/// Landmarks are normalized; `(x·W, y·H)` gives the pixel.
pub fn render(set: &LandmarkSet, base: Option<RgbImage>, features: Option<&FeatureIndexConfig>) -> RgbImage {
    let mut img = base.unwrap_or_else(|| RgbImage::new(CANVAS_SIZE, CANVAS_SIZE));
    let (w, h) = (img.width() as i64, img.height() as i64);
    let eyes = features.map(|f| f.eye_indices()).unwrap_or_default();
    let mouth = features.map(|f| f.mouth_indices()).unwrap_or_default();
    for (i, p) in set.points().iter().enumerate() {
        let color = if eyes.contains(&i) {
            EYE
        } else if mouth.contains(&i) {
            MOUTH
        } else {
            OTHER
        };
        let cx = (p[0] * w as f64).floor() as i64;
        let cy = (p[1] * h as f64).floor() as i64;
        for dy in -DOT_RADIUS..=DOT_RADIUS {
            for dx in -DOT_RADIUS..=DOT_RADIUS {
                let (x, y) = (cx + dx, cy + dy);
                if dx * dx + dy * dy <= DOT_RADIUS * DOT_RADIUS && (0..w).contains(&x) && (0..h).contains(&y) {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_lands_on_expected_pixel() {
        let set = LandmarkSet::new("t1", vec![[0.5, 0.25, 0.0], [2.0, -1.0, 0.0]]).unwrap();
        let img = render(&set, None, None);
        assert_eq!(*img.get_pixel(256, 128), OTHER);
        assert_eq!(*img.get_pixel(258, 128), OTHER);
        assert_eq!(*img.get_pixel(259, 128), Rgb([0, 0, 0]));
    }
}
