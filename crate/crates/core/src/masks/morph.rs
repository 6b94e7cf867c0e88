use serde::{Deserialize, Serialize};

use super::Mask;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// Dilates with a Euclidean disc of `radius` pixels (`dx² + dy² ≤ r²`).
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    dilate_with(mask, radius, Execution::default())
}

pub fn dilate_with(mask: &Mask, radius: usize, exec: Execution) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    // Per-row distance to the nearest set pixel in the same row.
    let row_dist: Vec<Vec<usize>> = exec::map_range(exec, h, |y| {
        let mut d = vec![usize::MAX; w];
        let mut last = None;
        for (x, dx) in d.iter_mut().enumerate() {
            if mask.get(x, y) {
                last = Some(x);
            }
            if let Some(l) = last {
                *dx = x - l;
            }
        }
        last = None;
        for x in (0..w).rev() {
            if mask.get(x, y) {
                last = Some(x);
            }
            if let Some(l) = last {
                d[x] = d[x].min(l - x);
            }
        }
        d
    });
    let r2 = radius * radius;
    let half_widths: Vec<usize> = (0..=radius).map(|dy| isqrt(r2 - dy * dy)).collect();
    let rows: Vec<Vec<bool>> = exec::map_range(exec, h, |y| {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        (0..w)
            .map(|x| (y0..=y1).any(|yy| row_dist[yy][x] <= half_widths[yy.abs_diff(y)]))
            .collect()
    });
    Mask::from_bits(w, h, rows.concat()).expect("same dimensions")
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub k_h: usize,
    pub k_w: usize,
}

impl Default for BlockSpec {
    fn default() -> Self {
        BlockSpec { k_h: 16, k_w: 16 }
    }
}

impl BlockSpec {
    pub fn validate(&self, mask: &Mask) -> Result<()> {
        if self.k_h == 0 || self.k_w == 0 || self.k_h > mask.height() || self.k_w > mask.width() {
            return Err(Error::InvalidInput(format!(
                "block {}x{} does not fit a {}x{} mask",
                self.k_h,
                self.k_w,
                mask.height(),
                mask.width()
            )));
        }
        Ok(())
    }
}

/// Quantizes a mask to non-overlapping `k_h × k_w` tiles: a tile is fully
/// set iff any of its input pixels is set. Edge tiles are truncated.
pub fn block_mask(m_f: &Mask, spec: BlockSpec) -> Result<Mask> {
    block_mask_with(m_f, spec, Execution::default())
}

pub fn block_mask_with(m_f: &Mask, spec: BlockSpec, exec: Execution) -> Result<Mask> {
    spec.validate(m_f)?;
    let (w, h) = (m_f.width(), m_f.height());
    let tiles_y = h.div_ceil(spec.k_h);
    let tiles_x = w.div_ceil(spec.k_w);
    let tile_rows: Vec<Vec<bool>> = exec::map_range(exec, tiles_y, |ty| {
        let ys = ty * spec.k_h..((ty + 1) * spec.k_h).min(h);
        (0..tiles_x)
            .map(|tx| {
                let xs = tx * spec.k_w..((tx + 1) * spec.k_w).min(w);
                ys.clone().any(|y| xs.clone().any(|x| m_f.get(x, y)))
            })
            .collect()
    });
    Ok(Mask::from_fn(w, h, |x, y| tile_rows[y / spec.k_h][x / spec.k_w]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_dilate(m: &Mask, r: usize) -> Mask {
        let r = r as i64;
        Mask::from_fn(m.width(), m.height(), |x, y| {
            (-r..=r)
                .any(|dy| (-r..=r).any(|dx| dx * dx + dy * dy <= r * r && m.get_signed(x as i64 + dx, y as i64 + dy)))
        })
    }

    fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> Mask {
        let bits = (0..w * h).map(|_| rng.random_bool(p)).collect();
        Mask::from_bits(w, h, bits).unwrap()
    }

    #[test]
    fn radius_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mask(&mut rng, 20, 13, 0.1);
        assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn single_pixel_becomes_disc() {
        let mut m = Mask::zeros(21, 21);
        m.set(10, 10, true);
        let d = dilate(&m, 3);
        // lattice points with dx² + dy² ≤ 9
        let expected = (-3i64..=3)
            .flat_map(|a| (-3i64..=3).map(move |b| (a, b)))
            .filter(|(a, b)| a * a + b * b <= 9)
            .count();
        assert_eq!(d.count(), expected);
        assert_eq!(expected, 29);
        assert_eq!(d, brute_dilate(&m, 3));
    }

    #[test]
    fn all_ones_saturates() {
        let m = Mask::ones(9, 4);
        assert_eq!(dilate(&m, 5), m);
    }

    #[test]
    fn matches_brute_force_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let m = random_mask(&mut rng, 17 + trial, 23, 0.02);
            let mut prev = m.clone();
            for r in [1, 2, 4, 7] {
                let d = dilate(&m, r);
                assert_eq!(d, brute_dilate(&m, r));
                assert_eq!(d, dilate_with(&m, r, Execution::Sequential));
                assert!(prev.is_subset_of(&d));
                prev = d;
            }
        }
    }

    #[test]
    fn block_single_pixel() {
        let mut m = Mask::zeros(32, 32);
        m.set(3, 5, true);
        let b = block_mask(&m, BlockSpec { k_h: 8, k_w: 8 }).unwrap();
        assert_eq!(b.count(), 64);
        assert!((0..8).all(|y| (0..8).all(|x| b.get(x, y))));
    }

    #[test]
    fn block_zero_and_truncated_edges() {
        let z = Mask::zeros(10, 7);
        assert!(block_mask(&z, BlockSpec { k_h: 4, k_w: 4 }).unwrap().is_empty());
        let mut m = Mask::zeros(10, 7);
        m.set(9, 6, true);
        let b = block_mask(&m, BlockSpec { k_h: 4, k_w: 4 }).unwrap();
        // bottom-right tile is 2 wide, 3 tall
        assert_eq!(b.count(), 6);
    }

    #[test]
    fn block_spec_validation() {
        let m = Mask::zeros(8, 8);
        assert!(block_mask(&m, BlockSpec { k_h: 0, k_w: 4 }).is_err());
        assert!(block_mask(&m, BlockSpec { k_h: 9, k_w: 4 }).is_err());
        assert!(block_mask(&m, BlockSpec { k_h: 8, k_w: 8 }).is_ok());
    }
}
