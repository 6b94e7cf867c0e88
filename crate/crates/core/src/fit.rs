//! Landmark-space fitting of pose and blendshape coefficients.
//!
//! Alternates a closed-form similarity alignment (coefficients fixed) with a
//! joint ridge solve for identity and expression coefficients (pose fixed).
//! Each half-step minimises the regularised objective exactly, so the
//! objective never increases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::align::umeyama_align;
use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;
use crate::model::{add_offsets, project, MorphableModel};
use crate::pose::PoseParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub lambda_id: f64,
    pub lambda_exp: f64,
    pub max_iterations: usize,
    /// Stop once the residual RMS changes by less than this between
    /// iterations (landmark units).
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda_id: 1e-4,
            lambda_exp: 1e-4,
            max_iterations: 50,
            tolerance: 1e-6,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_id >= 0.0 && self.lambda_exp >= 0.0) {
            return Err(Error::InvalidInput("ridge weights must be non-negative".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidInput("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub pose: PoseParams,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Root mean squared per-landmark distance of the final fit.
    pub residual_rms: f64,
    pub iterations: usize,
    /// Residual RMS after each iteration.
    pub residual_history: Vec<f64>,
}

impl FitResult {
    pub fn beta_norm(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

fn rms(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
        .sum();
    (sum / a.len() as f64).sqrt()
}

/// Fits `model` to `observed` by alternating minimisation of
/// `‖s·R·S(α, β) + t − observed‖² + λ_id‖α‖² + λ_exp‖β‖²`.
///
/// Hitting `max_iterations` is not an error; inspect `residual_rms`.
pub fn fit(model: &MorphableModel, observed: &LandmarkSet, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    if observed.topology_id() != model.topology_id() {
        return Err(Error::topology(model.topology_id(), observed.topology_id()));
    }
    if observed.len() != model.num_landmarks() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} landmarks, observation has {}",
            model.num_landmarks(),
            observed.len()
        )));
    }
    let target = observed.points();
    let (n_id, n_exp) = (model.num_identity(), model.num_expression());
    let n = n_id + n_exp;
    let basis = model.joint_basis();
    let gram = basis.transpose() * &basis;
    let mean = model.mean_vector();
    let obs = DVector::from_iterator(3 * target.len(), target.iter().flatten().copied());

    let mut coeffs = DVector::<f64>::zeros(n);
    let mut history = Vec::new();
    let mut pose = PoseParams::identity();

    for _ in 0..opts.max_iterations {
        let shape = add_offsets(model.mean_shape(), (&basis * &coeffs).as_slice());
        pose = umeyama_align(&shape, target)?;

        // Pose fixed: ‖s·R·(m + Bc) + t − o‖² = s²‖Bc − r‖², r = Rᵀ(o − t)/s − m.
        let s = pose.scale();
        let rt = pose.rotation().transpose();
        let mut residual_target = DVector::zeros(3 * target.len());
        for i in 0..target.len() {
            let o = obs.fixed_rows::<3>(3 * i) - pose.translation();
            let local = rt * o / s;
            residual_target
                .fixed_rows_mut::<3>(3 * i)
                .copy_from(&(local - mean.fixed_rows::<3>(3 * i)));
        }
        let mut lhs = &gram * (s * s);
        for j in 0..n {
            lhs[(j, j)] += if j < n_id { opts.lambda_id } else { opts.lambda_exp };
        }
        let rhs = basis.transpose() * residual_target * (s * s);
        coeffs = solve_spd(lhs, rhs)?;

        let shape = add_offsets(model.mean_shape(), (&basis * &coeffs).as_slice());
        let residual = rms(&project(&shape, &pose), target);
        let converged = history
            .last()
            .is_some_and(|prev: &f64| (prev - residual).abs() < opts.tolerance);
        history.push(residual);
        if converged {
            break;
        }
    }

    Ok(FitResult {
        pose,
        alpha: coeffs.rows(0, n_id).iter().copied().collect(),
        beta: coeffs.rows(n_id, n_exp).iter().copied().collect(),
        residual_rms: *history.last().expect("at least one iteration"),
        iterations: history.len(),
        residual_history: history,
    })
}

fn solve_spd(lhs: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    if lhs.nrows() == 0 {
        return Ok(rhs);
    }
    if let Some(chol) = lhs.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    // Unregularised and rank deficient: minimum-norm least squares.
    lhs.svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Solve(e.to_string()))
}

/// Landmarks of the fitted face with its expression removed: the fitted
/// identity at `β = 0`, mapped through the fitted pose.
pub fn neutral_projection(model: &MorphableModel, fit: &FitResult) -> Result<LandmarkSet> {
    let shape = model.synthesize(&fit.alpha, &vec![0.0; model.num_expression()])?;
    model.project(&shape, &fit.pose)
}

/// Landmarks of the fitted face including expression.
pub fn fitted_projection(model: &MorphableModel, fit: &FitResult) -> Result<LandmarkSet> {
    let shape = model.synthesize(&fit.alpha, &fit.beta)?;
    model.project(&shape, &fit.pose)
}
