//! Closed-form least-squares similarity alignment (Umeyama).

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::pose::PoseParams;

/// Relative singular-value threshold below which the centered source is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

struct Similarity {
    scale: f64,
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

/// `source` and `target` are `dim × n` column-point matrices.
fn umeyama_dyn(source: &DMatrix<f64>, target: &DMatrix<f64>, min_rank: usize) -> Result<Similarity> {
    let dim = source.nrows();
    let n = source.ncols();
    if target.shape() != source.shape() {
        return Err(Error::DimensionMismatch(format!(
            "alignment needs equal point counts, got {} and {}",
            n,
            target.ncols()
        )));
    }
    if n < dim.max(3) {
        return Err(Error::DegenerateAlignment(format!(
            "need at least {} points, got {n}",
            dim.max(3)
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = source.column_mean();
    let mu_t = target.column_mean();
    let src_c = source - &mu_s * DVector::from_element(n, 1.0).transpose();
    let tgt_c = target - &mu_t * DVector::from_element(n, 1.0).transpose();

    let var_s = src_c.norm_squared() * inv_n;
    // Eigenvalues of the scatter matrix are the squared singular values.
    let scatter_eigs = (&src_c * src_c.transpose()).symmetric_eigenvalues();
    let smax = scatter_eigs.max();
    let rank = scatter_eigs
        .iter()
        .filter(|&&e| e > RANK_TOL * RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .count();
    if !(var_s > 0.0) || rank < min_rank {
        return Err(Error::DegenerateAlignment(format!(
            "source configuration has rank {rank}, need at least {min_rank}"
        )));
    }

    let var_t = tgt_c.norm_squared() * inv_n;
    if !(var_t > RANK_TOL * RANK_TOL * (1.0 + mu_t.norm_squared())) {
        return Err(Error::DegenerateAlignment(
            "target configuration collapses to a point".into(),
        ));
    }

    let cov = &tgt_c * src_c.transpose() * inv_n;
    let svd = cov.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut signs = DVector::from_element(dim, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        signs[dim - 1] = -1.0;
    }
    let rotation = u * DMatrix::from_diagonal(&signs) * v_t;
    let trace: f64 = svd.singular_values.iter().zip(signs.iter()).map(|(d, s)| d * s).sum();
    let scale = trace / var_s;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateAlignment(format!(
            "target configuration collapses (scale {scale})"
        )));
    }
    let translation = &mu_t - &rotation * &mu_s * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

fn columns<const D: usize>(points: &[[f64; D]]) -> DMatrix<f64> {
    DMatrix::from_fn(D, points.len(), |r, c| points[c][r])
}

/// Returns the `(s, R, t)` minimising `Σ‖s·R·pᵢ + t − qᵢ‖²` over 3D point
/// pairs, with `R` a proper rotation.
pub fn umeyama_align(source: &[[f64; 3]], target: &[[f64; 3]]) -> Result<PoseParams> {
    let sim = umeyama_dyn(&columns(source), &columns(target), 2)?;
    let rotation = Matrix3::from_fn(|i, j| sim.rotation[(i, j)]);
    let translation = Vector3::from_fn(|i, _| sim.translation[i]);
    PoseParams::new(rotation, translation, sim.scale).map_err(|e| Error::DegenerateAlignment(e.to_string()))
}

/// Planar similarity transform `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity2 {
    pub scale: f64,
    pub rotation: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl Similarity2 {
    pub fn identity() -> Self {
        Similarity2 {
            scale: 1.0,
            rotation: Matrix2::identity(),
            translation: Vector2::zeros(),
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let q = self.rotation * Vector2::from(p) * self.scale + self.translation;
        [q.x, q.y]
    }

    pub fn inverse(&self) -> Similarity2 {
        let rt = self.rotation.transpose();
        Similarity2 {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }
}

/// 2D counterpart of [`umeyama_align`].
pub fn umeyama_align_2d(source: &[[f64; 2]], target: &[[f64; 2]]) -> Result<Similarity2> {
    let sim = umeyama_dyn(&columns(source), &columns(target), 1)?;
    Ok(Similarity2 {
        scale: sim.scale,
        rotation: Matrix2::from_fn(|i, j| sim.rotation[(i, j)]),
        translation: Vector2::from_fn(|i, _| sim.translation[i]),
    })
}

/// Sum of squared residuals of `pose` mapping `source` onto `target`.
pub fn alignment_cost(pose: &PoseParams, source: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    source
        .iter()
        .zip(target)
        .map(|(p, q)| {
            let m = pose.apply(p);
            (0..3).map(|c| (m[c] - q[c]).powi(2)).sum::<f64>()
        })
        .sum()
}
