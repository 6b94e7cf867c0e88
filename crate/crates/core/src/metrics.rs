//! Pose and expression distances between two landmark sequences, measured
//! through framewise morphable-model fits.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fit::{fit, FitOptions, FitResult};
use crate::landmarks::LandmarkSet;
use crate::model::MorphableModel;
use crate::pose::check_rotation;

/// Intrinsic Z-Y-X Euler angles in degrees, each in `(-180, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

fn wrap_deg(a: f64) -> f64 {
    let w = a - 360.0 * (a / 360.0).round();
    if w <= -180.0 {
        w + 360.0
    } else {
        w
    }
}

impl PoseAngles {
    /// Euclidean norm of the shortest-arc component differences.
    pub fn distance(&self, other: &PoseAngles) -> f64 {
        let d = [
            wrap_deg(self.yaw - other.yaw),
            wrap_deg(self.pitch - other.pitch),
            wrap_deg(self.roll - other.roll),
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// Decomposes `R = Rz(yaw)·Ry(pitch)·Rx(roll)`. At `|pitch| = 90°` roll is
/// fixed to 0 and yaw takes the remaining rotation.
pub fn rotation_to_angles(r: &Matrix3<f64>) -> Result<PoseAngles> {
    check_rotation(r, 1e-9)?;
    let cp = r[(0, 0)].hypot(r[(1, 0)]);
    let pitch = (-r[(2, 0)]).atan2(cp);
    let (yaw, roll) = if cp < 1e-12 {
        ((-r[(0, 1)]).atan2(r[(1, 1)]), 0.0)
    } else {
        (r[(1, 0)].atan2(r[(0, 0)]), r[(2, 1)].atan2(r[(2, 2)]))
    };
    Ok(PoseAngles {
        yaw: wrap_deg(yaw.to_degrees()),
        pitch: wrap_deg(pitch.to_degrees()),
        roll: wrap_deg(roll.to_degrees()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFrame {
    pub pose: Vec<f64>,
    pub expression: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean angle distance over frames, degrees.
    pub pose_error: f64,
    /// Mean `‖β_a − β_b‖₂` over frames.
    pub expression_error: f64,
    pub frames: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_frame: Option<PerFrame>,
}

fn fit_pairs(
    seq_a: &[LandmarkSet],
    seq_b: &[LandmarkSet],
    model: &MorphableModel,
    opts: &FitOptions,
    exec: Execution,
) -> Result<Vec<(FitResult, FitResult)>> {
    if seq_a.len() != seq_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "sequences have {} and {} frames",
            seq_a.len(),
            seq_b.len()
        )));
    }
    if seq_a.is_empty() {
        return Err(Error::EmptySequence);
    }
    let idx: Vec<usize> = (0..seq_a.len()).collect();
    exec::try_map(exec, &idx, |_, &i| {
        let a = fit(model, &seq_a[i], opts)?;
        let b = fit(model, &seq_b[i], opts)?;
        Ok((a, b))
    })
}

fn frame_pose_distance(a: &FitResult, b: &FitResult) -> Result<f64> {
    Ok(rotation_to_angles(a.pose.rotation())?.distance(&rotation_to_angles(b.pose.rotation())?))
}

fn frame_expression_distance(a: &FitResult, b: &FitResult) -> f64 {
    a.beta
        .iter()
        .zip(&b.beta)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fits both sequences once and reports both errors.
pub fn evaluate(
    seq_a: &[LandmarkSet],
    seq_b: &[LandmarkSet],
    model: &MorphableModel,
    opts: &FitOptions,
    exec: Execution,
    keep_per_frame: bool,
) -> Result<MetricReport> {
    let pairs = fit_pairs(seq_a, seq_b, model, opts, exec)?;
    let pose = pairs
        .iter()
        .map(|(a, b)| frame_pose_distance(a, b))
        .collect::<Result<Vec<_>>>()?;
    let expression: Vec<f64> = pairs.iter().map(|(a, b)| frame_expression_distance(a, b)).collect();
    Ok(MetricReport {
        pose_error: mean(&pose),
        expression_error: mean(&expression),
        frames: pairs.len(),
        per_frame: keep_per_frame.then_some(PerFrame { pose, expression }),
    })
}

pub fn pose_error(
    seq_a: &[LandmarkSet],
    seq_b: &[LandmarkSet],
    model: &MorphableModel,
    opts: &FitOptions,
    exec: Execution,
) -> Result<f64> {
    let pairs = fit_pairs(seq_a, seq_b, model, opts, exec)?;
    let d = pairs
        .iter()
        .map(|(a, b)| frame_pose_distance(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&d))
}

pub fn expression_error(
    seq_a: &[LandmarkSet],
    seq_b: &[LandmarkSet],
    model: &MorphableModel,
    opts: &FitOptions,
    exec: Execution,
) -> Result<f64> {
    let pairs = fit_pairs(seq_a, seq_b, model, opts, exec)?;
    let d: Vec<f64> = pairs.iter().map(|(a, b)| frame_expression_distance(a, b)).collect();
    Ok(mean(&d))
}
