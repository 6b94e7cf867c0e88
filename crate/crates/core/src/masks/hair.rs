use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Mask;
use crate::align::umeyama_align_2d;
use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;

/// Warps a donor hair mask into the target image by the 2D similarity that
/// maps the donor's `stable` landmarks onto the target's.
///
/// Landmarks are normalized, so pixel positions are `(x·W, y·H)` of the mask.
pub fn align_hair_mask(
    donor_landmarks: &LandmarkSet,
    target_landmarks: &LandmarkSet,
    donor_hair: &Mask,
    stable: &[usize],
) -> Result<Mask> {
    donor_landmarks.ensure_compatible(target_landmarks)?;
    if let Some(&i) = stable.iter().find(|&&i| i >= donor_landmarks.len()) {
        return Err(Error::InvalidInput(format!("stable landmark index {i} out of range")));
    }
    let (w, h) = (donor_hair.width(), donor_hair.height());
    if donor_hair.is_empty() {
        return Ok(Mask::zeros(w, h));
    }
    let to_px = |l: &LandmarkSet| -> Vec<[f64; 2]> {
        stable
            .iter()
            .map(|&i| [l[i][0] * w as f64, l[i][1] * h as f64])
            .collect()
    };
    let sim = umeyama_align_2d(&to_px(donor_landmarks), &to_px(target_landmarks))?;
    let inv = sim.inverse();
    Ok(Mask::from_fn(w, h, |x, y| {
        let [sx, sy] = inv.apply([x as f64 + 0.5, y as f64 + 0.5]);
        donor_hair.get_signed(sx.floor() as i64, sy.floor() as i64)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShoulderRectSpec {
    /// Inclusive pixel bounds for rectangle width.
    pub width_range: [usize; 2],
    pub height_range: [usize; 2],
    /// Center offsets are uniform in `[-jitter, jitter]` on each axis.
    pub jitter: f64,
}

impl Default for ShoulderRectSpec {
    fn default() -> Self {
        ShoulderRectSpec {
            width_range: [40, 100],
            height_range: [30, 80],
            jitter: 10.0,
        }
    }
}

/// Union of one random axis-aligned rectangle per shoulder point (pixel
/// coordinates), clipped to the canvas.
pub fn shoulder_rects(
    points: &[[f64; 2]],
    rng_seed: u64,
    spec: &ShoulderRectSpec,
    width: usize,
    height: usize,
) -> Mask {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut mask = Mask::zeros(width, height);
    let pick = |rng: &mut ChaCha8Rng, [lo, hi]: [usize; 2]| if lo >= hi { lo } else { rng.random_range(lo..=hi) };
    for p in points {
        let rw = pick(&mut rng, spec.width_range);
        let rh = pick(&mut rng, spec.height_range);
        let (jx, jy) = if spec.jitter > 0.0 {
            (
                rng.random_range(-spec.jitter..=spec.jitter),
                rng.random_range(-spec.jitter..=spec.jitter),
            )
        } else {
            (0.0, 0.0)
        };
        let x0 = (p[0] + jx - rw as f64 / 2.0).round() as i64;
        let y0 = (p[1] + jy - rh as f64 / 2.0).round() as i64;
        let xs = x0.max(0)..(x0 + rw as i64).min(width as i64);
        let ys = y0.max(0)..(y0 + rh as i64).min(height as i64);
        for y in ys {
            for x in xs.clone() {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    mask
}

/// `cloth ⊙ (1 − hair) ⊙ (1 − rect)`.
pub fn compose_cloth_mask(m_cloth: &Mask, m_hair: &Mask, m_rect: &Mask) -> Result<Mask> {
    m_cloth.ensure_same_size(m_hair)?;
    m_cloth.ensure_same_size(m_rect)?;
    let bits = m_cloth
        .bits()
        .iter()
        .zip(m_hair.bits())
        .zip(m_rect.bits())
        .map(|((&c, &h), &r)| c && !h && !r)
        .collect();
    Mask::from_bits(m_cloth.width(), m_cloth.height(), bits)
}
