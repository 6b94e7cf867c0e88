//! Linear morphable face model: `S(α, β) = mean + B_id·α + B_exp·β`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::landmarks::{self, LandmarkSet, MP478};
use crate::pose::PoseParams;
use crate::presets;

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    topology_id: String,
    mean: Vec<[f64; 3]>,
    /// `3K × N_id`, row `3i + c` is coordinate `c` of landmark `i`.
    identity: DMatrix<f64>,
    expression: DMatrix<f64>,
}

impl MorphableModel {
    pub fn new(
        topology_id: impl Into<String>,
        mean: Vec<[f64; 3]>,
        identity: DMatrix<f64>,
        expression: DMatrix<f64>,
    ) -> Result<Self> {
        let topology_id = topology_id.into();
        let k = mean.len();
        if k == 0 {
            return Err(Error::InvalidInput("model mean shape is empty".into()));
        }
        if let Some(expected) = landmarks::topology_count(&topology_id) {
            if expected != k {
                return Err(Error::DimensionMismatch(format!(
                    "topology `{topology_id}` declares {expected} landmarks, mean has {k}"
                )));
            }
        }
        for (name, basis) in [("identity", &identity), ("expression", &expression)] {
            if basis.nrows() != 3 * k {
                return Err(Error::DimensionMismatch(format!(
                    "{name} basis has {} rows, expected {}",
                    basis.nrows(),
                    3 * k
                )));
            }
            for (j, col) in basis.column_iter().enumerate() {
                let norm = col.norm();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::InvalidInput(format!("{name} basis column {j} has norm {norm}")));
                }
            }
        }
        if mean.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("model mean shape is not finite".into()));
        }
        Ok(MorphableModel {
            topology_id,
            mean,
            identity,
            expression,
        })
    }

    pub fn topology_id(&self) -> &str {
        &self.topology_id
    }

    pub fn num_landmarks(&self) -> usize {
        self.mean.len()
    }

    pub fn num_identity(&self) -> usize {
        self.identity.ncols()
    }

    pub fn num_expression(&self) -> usize {
        self.expression.ncols()
    }

    pub fn mean_shape(&self) -> &[[f64; 3]] {
        &self.mean
    }

    pub fn identity_basis(&self) -> &DMatrix<f64> {
        &self.identity
    }

    pub fn expression_basis(&self) -> &DMatrix<f64> {
        &self.expression
    }

    /// `[B_id | B_exp]` as one `3K × (N_id + N_exp)` matrix.
    pub fn joint_basis(&self) -> DMatrix<f64> {
        let (n_id, n_exp) = (self.num_identity(), self.num_expression());
        let mut b = DMatrix::zeros(3 * self.num_landmarks(), n_id + n_exp);
        b.columns_mut(0, n_id).copy_from(&self.identity);
        b.columns_mut(n_id, n_exp).copy_from(&self.expression);
        b
    }

    pub(crate) fn mean_vector(&self) -> DVector<f64> {
        DVector::from_iterator(3 * self.mean.len(), self.mean.iter().flatten().copied())
    }

    /// Evaluates the blendshape model for the given coefficients.
    pub fn synthesize(&self, alpha: &[f64], beta: &[f64]) -> Result<Vec<[f64; 3]>> {
        if alpha.len() != self.num_identity() || beta.len() != self.num_expression() {
            return Err(Error::DimensionMismatch(format!(
                "coefficients ({}, {}) do not match basis columns ({}, {})",
                alpha.len(),
                beta.len(),
                self.num_identity(),
                self.num_expression()
            )));
        }
        let offset =
            &self.identity * DVector::from_column_slice(alpha) + &self.expression * DVector::from_column_slice(beta);
        Ok(add_offsets(&self.mean, offset.as_slice()))
    }

    /// Maps a model-space shape into the landmark frame.
    pub fn project(&self, shape: &[[f64; 3]], pose: &PoseParams) -> Result<LandmarkSet> {
        LandmarkSet::new(self.topology_id.clone(), project(shape, pose))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: ModelFile = io::read_json(path)?;
        file.into_model()
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile::from_model(self)
    }
}

pub(crate) fn add_offsets(mean: &[[f64; 3]], offsets: &[f64]) -> Vec<[f64; 3]> {
    mean.iter()
        .zip(offsets.chunks_exact(3))
        .map(|(m, d)| [m[0] + d[0], m[1] + d[1], m[2] + d[2]])
        .collect()
}

/// Applies `p ↦ s·R·p + t` to every point.
pub fn project(shape: &[[f64; 3]], pose: &PoseParams) -> Vec<[f64; 3]> {
    shape.iter().map(|p| pose.apply(p)).collect()
}

/// JSON model document with flat row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct ModelFile {
    pub topology_id: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N_id")]
    pub n_id: usize,
    #[serde(rename = "N_exp")]
    pub n_exp: usize,
    pub mean_shape: Vec<f64>,
    pub identity_basis: Vec<f64>,
    pub expression_basis: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(model: &MorphableModel) -> Self {
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        ModelFile {
            topology_id: model.topology_id.clone(),
            k: model.num_landmarks(),
            n_id: model.num_identity(),
            n_exp: model.num_expression(),
            mean_shape: model.mean.iter().flatten().copied().collect(),
            identity_basis: row_major(&model.identity),
            expression_basis: row_major(&model.expression),
        }
    }

    pub fn into_model(self) -> Result<MorphableModel> {
        let k = self.k;
        let check = |name: &str, len: usize, expected: usize| {
            if len == expected {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!(
                    "{name} has {len} values, expected {expected}"
                )))
            }
        };
        check("mean_shape", self.mean_shape.len(), 3 * k)?;
        check("identity_basis", self.identity_basis.len(), 3 * k * self.n_id)?;
        check("expression_basis", self.expression_basis.len(), 3 * k * self.n_exp)?;
        let mean = self.mean_shape.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let identity = DMatrix::from_row_slice(3 * k, self.n_id, &self.identity_basis);
        let expression = DMatrix::from_row_slice(3 * k, self.n_exp, &self.expression_basis);
        MorphableModel::new(self.topology_id, mean, identity, expression)
    }
}

/// Per-coordinate RMS displacement of one unit identity coefficient.
const SYNTH_ID_RMS: f64 = 0.004;
/// Per-coordinate RMS displacement of one unit expression coefficient.
const SYNTH_EXP_RMS: f64 = 0.003;
const FACE_RADII: [f64; 3] = [0.15, 0.2, 0.1];

/// Model-space centers of the eyes and mouth on the synthetic face.
pub const SYNTH_EYE_A_CENTER: [f64; 2] = [-0.06, -0.03];
pub const SYNTH_EYE_B_CENTER: [f64; 2] = [0.06, -0.03];
pub const SYNTH_MOUTH_CENTER: [f64; 2] = [0.0, 0.09];

/// Deterministic face-like model for tests and fixtures.
///
/// The mean is an ellipsoidal cap centered on the origin (image `y` down).
/// For the default topology (`K = 478`) the eye, iris and lip landmarks are
/// placed where the mesh preset expects them, so the preset feature indices
/// measure real apertures. Basis columns are smooth random fields, made
/// orthogonal to each other and to the similarity-transform tangent space
/// of the mean, then rescaled.
pub fn make_synthetic_model(seed: u64, k: usize, n_id: usize, n_exp: usize) -> Result<MorphableModel> {
    if k < 4 {
        return Err(Error::InvalidInput(format!("synthetic model needs K >= 4, got {k}")));
    }
    let topology_id = if k == 478 {
        MP478.to_string()
    } else {
        format!("synthetic{k}")
    };
    let mean = synthetic_mean(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let feature_centers: Vec<[f64; 3]> = if k == 478 {
        [SYNTH_EYE_A_CENTER, SYNTH_EYE_B_CENTER, SYNTH_MOUTH_CENTER]
            .iter()
            .map(|c| surface_point(c[0], c[1]))
            .collect()
    } else {
        Vec::new()
    };

    let mut raw: Vec<DVector<f64>> = Vec::with_capacity(n_id + n_exp);
    for _ in 0..n_id {
        raw.push(smooth_field(&mut rng, &mean, None));
    }
    for _ in 0..n_exp {
        let center = if feature_centers.is_empty() {
            mean[rng.random_range(0..k)]
        } else {
            feature_centers[rng.random_range(0..feature_centers.len())]
        };
        raw.push(smooth_field(&mut rng, &mean, Some(center)));
    }

    let mut ortho = similarity_tangent(&mean);
    let mut columns = Vec::with_capacity(raw.len());
    for (j, col) in raw.into_iter().enumerate() {
        let target_rms = if j < n_id { SYNTH_ID_RMS } else { SYNTH_EXP_RMS };
        let mut v = col.clone();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &ortho {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let vn = v.norm();
        let unit = if vn > 1e-6 * col.norm() {
            let u = v / vn;
            ortho.push(u.clone());
            u
        } else {
            // Out of orthogonal directions (N > 3K − 7); keep the raw field.
            let n = col.norm();
            col / n
        };
        columns.push(unit * (target_rms * ((3 * k) as f64).sqrt()));
    }
    let stack = |cols: &[DVector<f64>]| {
        if cols.is_empty() {
            DMatrix::zeros(3 * k, 0)
        } else {
            DMatrix::from_columns(cols)
        }
    };
    let identity = stack(&columns[..n_id]);
    let expression = stack(&columns[n_id..]);
    MorphableModel::new(topology_id, mean, identity, expression)
}

fn surface_point(x: f64, y: f64) -> [f64; 3] {
    let [rx, ry, rz] = FACE_RADII;
    let q = 1.0 - (x / rx).powi(2) - (y / ry).powi(2);
    [x, y, -rz * q.max(0.0).sqrt()]
}

fn synthetic_mean(k: usize) -> Vec<[f64; 3]> {
    // Fibonacci spiral over the front cap of the ellipsoid.
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut mean: Vec<[f64; 3]> = (0..k)
        .map(|i| {
            let r = ((i as f64 + 0.5) / k as f64).sqrt() * 0.95;
            let theta = i as f64 * golden;
            surface_point(FACE_RADII[0] * r * theta.cos(), FACE_RADII[1] * r * theta.sin())
        })
        .collect();
    if k == 478 {
        place_mp478_features(&mut mean);
    }
    mean
}

fn place_ring(
    mean: &mut [[f64; 3]],
    indices: &[usize],
    center: [f64; 2],
    radii: [f64; 2],
    top: Option<usize>,
    bottom: Option<usize>,
) {
    let others: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| Some(i) != top && Some(i) != bottom)
        .collect();
    for (j, &idx) in others.iter().enumerate() {
        let a = 2.0 * PI * (j as f64 + 0.5) / others.len() as f64;
        mean[idx] = surface_point(center[0] + radii[0] * a.cos(), center[1] + radii[1] * a.sin());
    }
    if let Some(t) = top {
        mean[t] = surface_point(center[0], center[1] - radii[1]);
    }
    if let Some(b) = bottom {
        mean[b] = surface_point(center[0], center[1] + radii[1]);
    }
}

fn place_mp478_features(mean: &mut [[f64; 3]]) {
    use presets::*;
    let eye_radii = [0.025, 0.012];
    place_ring(
        mean,
        &MP478_EYE_A,
        SYNTH_EYE_A_CENTER,
        eye_radii,
        Some(MP478_EYE_A_PAIR.0),
        Some(MP478_EYE_A_PAIR.1),
    );
    place_ring(
        mean,
        &MP478_EYE_B,
        SYNTH_EYE_B_CENTER,
        eye_radii,
        Some(MP478_EYE_B_PAIR.0),
        Some(MP478_EYE_B_PAIR.1),
    );
    for (iris, c) in [(MP478_IRIS_A, SYNTH_EYE_A_CENTER), (MP478_IRIS_B, SYNTH_EYE_B_CENTER)] {
        mean[iris[0]] = surface_point(c[0], c[1]);
        place_ring(mean, &iris[1..], c, [0.006, 0.006], None, None);
    }
    place_ring(mean, &MP478_LIPS_OUTER, SYNTH_MOUTH_CENTER, [0.06, 0.025], None, None);
    place_ring(
        mean,
        &MP478_LIPS_INNER,
        SYNTH_MOUTH_CENTER,
        [0.045, 0.008],
        Some(MP478_MOUTH_PAIR.0),
        Some(MP478_MOUTH_PAIR.1),
    );
    mean[1] = surface_point(0.0, 0.03);
    mean[168] = surface_point(0.0, -0.03);
}

/// Low-frequency random displacement field, optionally concentrated
/// around `center`.
fn smooth_field(rng: &mut ChaCha8Rng, mean: &[[f64; 3]], center: Option<[f64; 3]>) -> DVector<f64> {
    const WAVES: usize = 3;
    let mut waves = Vec::with_capacity(3 * WAVES);
    for _ in 0..3 * WAVES {
        let freq: f64 = rng.random_range(3.0..25.0);
        let dir = [
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0f64),
        ];
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-3);
        let omega = [freq * dir[0] / n, freq * dir[1] / n, freq * dir[2] / n];
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let amp: f64 = rng.random_range(-1.0..1.0);
        waves.push((omega, phase, amp));
    }
    let mut v = DVector::zeros(3 * mean.len());
    for (i, p) in mean.iter().enumerate() {
        let weight = center.map_or(1.0, |c| {
            let d2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
            0.2 + (-d2 / (2.0 * 0.04 * 0.04)).exp()
        });
        for c in 0..3 {
            let s: f64 = waves[c * WAVES..(c + 1) * WAVES]
                .iter()
                .map(|(w, ph, a)| a * (w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + ph).sin())
                .sum();
            v[3 * i + c] = weight * s;
        }
    }
    v
}

/// Orthonormal basis of the 7-dimensional similarity tangent space at `mean`
/// (3 translations, 3 infinitesimal rotations, 1 scale).
fn similarity_tangent(mean: &[[f64; 3]]) -> Vec<DVector<f64>> {
    let n = 3 * mean.len();
    let mut gens: Vec<DVector<f64>> = Vec::with_capacity(7);
    for axis in 0..3 {
        gens.push(DVector::from_fn(n, |r, _| if r % 3 == axis { 1.0 } else { 0.0 }));
    }
    for axis in 0..3 {
        gens.push(DVector::from_fn(n, |r, _| {
            let p = mean[r / 3];
            // (e_axis × p)[r % 3]
            match (axis, r % 3) {
                (0, 1) => -p[2],
                (0, 2) => p[1],
                (1, 0) => p[2],
                (1, 2) => -p[0],
                (2, 0) => -p[1],
                (2, 1) => p[0],
                _ => 0.0,
            }
        }));
    }
    gens.push(DVector::from_fn(n, |r, _| mean[r / 3][r % 3]));
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(7);
    for g in gens {
        let mut v = g;
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-12 {
            basis.push(v / norm);
        }
    }
    basis
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn small() -> MorphableModel {
        make_synthetic_model(7, 40, 4, 5).unwrap()
    }

    #[test]
    fn zero_coefficients_give_mean() {
        let m = small();
        let s = m.synthesize(&[0.0; 4], &[0.0; 5]).unwrap();
        assert_eq!(s, m.mean_shape());
    }

    #[test]
    fn unit_identity_coefficient_adds_first_column() {
        let m = small();
        let s = m.synthesize(&[1.0, 0.0, 0.0, 0.0], &[0.0; 5]).unwrap();
        for (i, p) in s.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(p[c], m.mean_shape()[i][c] + m.identity_basis()[(3 * i + c, 0)]);
            }
        }
    }

    #[test]
    fn synthesize_matches_dense_product_oracle() {
        let m = small();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alpha: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let beta: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = m.synthesize(&alpha, &beta).unwrap();
        // naive triple loop
        for i in 0..m.num_landmarks() {
            for c in 0..3 {
                let r = 3 * i + c;
                let mut v = m.mean_shape()[i][c];
                for (j, a) in alpha.iter().enumerate() {
                    v += m.identity_basis()[(r, j)] * a;
                }
                for (j, b) in beta.iter().enumerate() {
                    v += m.expression_basis()[(r, j)] * b;
                }
                assert!((s[i][c] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = small();
        assert!(matches!(
            m.synthesize(&[0.0; 3], &[0.0; 5]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn project_examples() {
        let shape = vec![[1.0, 0.0, 0.0], [0.2, -0.3, 0.4]];
        assert_eq!(project(&shape, &PoseParams::identity()), shape);
        let doubled = PoseParams::identity().with_scale(2.0).unwrap();
        assert_eq!(project(&shape, &doubled)[1], [0.4, -0.6, 0.8]);
        let rz = PoseParams::from_euler_deg(90.0, 0.0, 0.0, [0.0; 3], 1.0).unwrap();
        let p = project(&shape, &rz)[0];
        assert!((p[0]).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15 && p[2].abs() < 1e-15);
    }

    #[test]
    fn project_is_linear_in_scale() {
        let m = small();
        let pose = PoseParams::from_euler_deg(20.0, 5.0, -3.0, [0.0; 3], 1.0).unwrap();
        let base = project(m.mean_shape(), &pose);
        let scaled = project(m.mean_shape(), &pose.with_scale(3.0).unwrap());
        for (a, b) in base.iter().zip(&scaled) {
            for c in 0..3 {
                assert!((3.0 * a[c] - b[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn synthetic_model_is_deterministic_with_nonzero_columns() {
        let a = make_synthetic_model(42, 478, 20, 30).unwrap();
        let b = make_synthetic_model(42, 478, 20, 30).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.topology_id(), MP478);
        let c = make_synthetic_model(43, 478, 20, 30).unwrap();
        assert_ne!(a, c);
        for col in a.joint_basis().column_iter() {
            assert!(col.norm() > 0.0);
        }
    }

    #[test]
    fn synthetic_basis_is_orthogonal_and_free_of_pose_directions() {
        let m = make_synthetic_model(1, 478, 20, 30).unwrap();
        let b = m.joint_basis();
        let g = b.transpose() * &b;
        let d = g[(0, 0)];
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    assert!(g[(i, j)].abs() < 1e-10 * d);
                }
            }
        }
        // rotating the mean about z is not expressible by the basis
        let tangent = similarity_tangent(m.mean_shape());
        for q in &tangent {
            assert!((b.transpose() * q).amax() < 1e-10);
        }
    }

    #[test]
    fn synthetic_features_have_positive_apertures() {
        let m = make_synthetic_model(3, 478, 2, 2).unwrap();
        let mean = m.mean_shape();
        for (top, bot) in [
            presets::MP478_EYE_A_PAIR,
            presets::MP478_EYE_B_PAIR,
            presets::MP478_MOUTH_PAIR,
        ] {
            assert!(mean[bot][1] - mean[top][1] > 0.01);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let m = small();
        let text = serde_json::to_string(&m.to_file()).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_model().unwrap(), m);
    }

    #[test]
    fn model_file_length_checked() {
        let mut f = small().to_file();
        f.identity_basis.pop();
        assert!(f.into_model().is_err());
    }
}
