use std::ops::{Index, IndexMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Identifier of the default 478-point face mesh convention.
pub const MP478: &str = "mp478";

/// Landmark count declared by a named topology, if it is a known one.
pub fn topology_count(topology_id: &str) -> Option<usize> {
    match topology_id {
        MP478 => Some(478),
        _ => None,
    }
}

/// Ordered 3D landmarks in normalized image coordinates.
///
/// `x` and `y` lie in `[0, 1]` for on-screen points, `z` is relative depth on
/// the same scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    topology_id: String,
    points: Vec<[f64; 3]>,
}

impl LandmarkSet {
    pub fn new(topology_id: impl Into<String>, points: Vec<[f64; 3]>) -> Result<Self> {
        let topology_id = topology_id.into();
        if points.is_empty() {
            return Err(Error::InvalidInput("landmark set is empty".into()));
        }
        if let Some(k) = topology_count(&topology_id) {
            if k != points.len() {
                return Err(Error::DimensionMismatch(format!(
                    "topology `{topology_id}` declares {k} landmarks, got {}",
                    points.len()
                )));
            }
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(format!("landmark {i} is not finite")));
        }
        Ok(LandmarkSet { topology_id, points })
    }

    pub fn topology_id(&self) -> &str {
        &self.topology_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn into_points(self) -> Vec<[f64; 3]> {
        self.points
    }

    pub fn ensure_compatible(&self, other: &LandmarkSet) -> Result<()> {
        if self.topology_id != other.topology_id {
            return Err(Error::topology(&self.topology_id, &other.topology_id));
        }
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} landmarks",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &LandmarkSet, f: impl Fn(f64, f64) -> f64) -> Result<LandmarkSet> {
        self.ensure_compatible(other)?;
        let points = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])])
            .collect();
        Ok(LandmarkSet {
            topology_id: self.topology_id.clone(),
            points,
        })
    }

    pub fn add(&self, other: &LandmarkSet) -> Result<LandmarkSet> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &LandmarkSet) -> Result<LandmarkSet> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn translated(&self, offset: [f64; 3]) -> LandmarkSet {
        LandmarkSet {
            topology_id: self.topology_id.clone(),
            points: self
                .points
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
                .collect(),
        }
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &LandmarkSet) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }

    /// Root mean squared per-point Euclidean distance.
    pub fn rms_diff(&self, other: &LandmarkSet) -> f64 {
        let sum: f64 = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
            .sum();
        (sum / self.points.len() as f64).sqrt()
    }
}

impl Index<usize> for LandmarkSet {
    type Output = [f64; 3];

    fn index(&self, i: usize) -> &[f64; 3] {
        &self.points[i]
    }
}

impl IndexMut<usize> for LandmarkSet {
    fn index_mut(&mut self, i: usize) -> &mut [f64; 3] {
        &mut self.points[i]
    }
}

/// On-disk landmark sequence: `{topology_id, frames: [[[x,y,z]; K], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFile {
    pub topology_id: String,
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl LandmarkFile {
    pub fn from_sets(topology_id: &str, sets: &[LandmarkSet]) -> Self {
        LandmarkFile {
            topology_id: topology_id.to_string(),
            frames: sets.iter().map(|s| s.points.clone()).collect(),
        }
    }

    /// Validates every frame into a [`LandmarkSet`].
    pub fn into_sets(self) -> Result<Vec<LandmarkSet>> {
        let k = self.frames.first().map(Vec::len);
        self.frames
            .into_iter()
            .enumerate()
            .map(|(i, pts)| {
                if Some(pts.len()) != k {
                    return Err(Error::DimensionMismatch(format!(
                        "frame {i} has {} landmarks, frame 0 has {}",
                        pts.len(),
                        k.unwrap_or(0)
                    )));
                }
                LandmarkSet::new(self.topology_id.clone(), pts)
                    .map_err(|e| Error::InvalidInput(format!("frame {i}: {e}")))
            })
            .collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        io::read_json(path)
    }

    /// Reads and validates a non-empty sequence.
    pub fn read_sets(path: impl AsRef<Path>) -> Result<Vec<LandmarkSet>> {
        let path = path.as_ref();
        let sets = Self::read(path)?
            .into_sets()
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if sets.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{}: frames array is empty",
                path.display()
            )));
        }
        Ok(sets)
    }
}
