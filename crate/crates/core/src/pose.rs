use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Similarity transform `p ↦ scale·R·p + t` from model space into the
/// landmark frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

/// Checks `RᵀR = I` and `det R = +1` within `tol`.
pub fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if !ortho.is_finite() || ortho > tol || (det - 1.0).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "not a proper rotation (orthogonality error {ortho:e}, det {det})"
        )));
    }
    Ok(())
}

impl PoseParams {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        check_rotation(&rotation, ORTHO_TOL)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!("pose scale must be positive, got {scale}")));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("pose translation is not finite".into()));
        }
        Ok(PoseParams {
            rotation,
            translation,
            scale,
        })
    }

    pub fn identity() -> Self {
        PoseParams {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Builds a pose from intrinsic Z-Y-X Euler angles in degrees.
    pub fn from_euler_deg(yaw: f64, pitch: f64, roll: f64, translation: [f64; 3], scale: f64) -> Result<Self> {
        Self::new(euler_zyx_deg(yaw, pitch, roll), Vector3::from(translation), scale)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(self.rotation, self.translation, scale)
    }

    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        let q = self.rotation * Vector3::from(*p) * self.scale + self.translation;
        [q.x, q.y, q.z]
    }

    /// Pre-composes a rotation about `center`, i.e. returns the pose of the
    /// same shape after rotating the landmark frame by `r` around `center`.
    pub fn rotated_about(&self, r: &Matrix3<f64>, center: [f64; 3]) -> Result<Self> {
        let c = Vector3::from(center);
        Self::new(r * self.rotation, r * (self.translation - c) + c, self.scale)
    }

    /// Angle in degrees of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &PoseParams) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        // acos loses precision near 0; use the antisymmetric part as well.
        let skew = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        let sin = skew.norm() / 2.0;
        sin.atan2(cos).to_degrees()
    }
}

pub fn euler_zyx_deg(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw.to_radians());
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), pitch.to_radians());
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), roll.to_radians());
    (rz * ry * rx).into_inner()
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    scale: f64,
}

impl Serialize for PoseParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.rotation;
        PoseRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
            scale: self.scale,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        let rows = repr.rotation;
        let rotation = Matrix3::from_fn(|i, j| rows[i][j]);
        PoseParams::new(rotation, Vector3::from(repr.translation), repr.scale).map_err(serde::de::Error::custom)
    }
}
