//! Expression-aware landmark retargeting.
//!
//! Reference and driver landmarks are first neutralized against a fitted
//! morphable model (`L − L_fit + L_fit|β=0`). Driver motion is then taken
//! relative to a neutral driver frame and transferred onto the neutral
//! reference, with eye and mouth rows rescaled by the ratio of the two
//! faces' neutral feature apertures.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fit::{fit, fitted_projection, neutral_projection, FitOptions, FitResult};
use crate::landmarks::{LandmarkSet, MP478};
use crate::model::MorphableModel;
use crate::presets;

/// Driver apertures smaller than this are rejected.
pub const APERTURE_EPSILON: f64 = 1e-6;

/// One facial feature: the landmark pair whose vertical gap measures its
/// opening, and every landmark that moves with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRegion {
    pub top: usize,
    pub bottom: usize,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureIndexConfig {
    pub topology_id: String,
    pub eyes: Vec<FeatureRegion>,
    pub mouth: FeatureRegion,
}

impl FeatureIndexConfig {
    /// Named preset; only `mp478` ships.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            MP478 => Ok(FeatureIndexConfig {
                topology_id: MP478.into(),
                eyes: vec![
                    FeatureRegion {
                        top: presets::MP478_EYE_A_PAIR.0,
                        bottom: presets::MP478_EYE_A_PAIR.1,
                        indices: presets::mp478_eye_a_region(),
                    },
                    FeatureRegion {
                        top: presets::MP478_EYE_B_PAIR.0,
                        bottom: presets::MP478_EYE_B_PAIR.1,
                        indices: presets::mp478_eye_b_region(),
                    },
                ],
                mouth: FeatureRegion {
                    top: presets::MP478_MOUTH_PAIR.0,
                    bottom: presets::MP478_MOUTH_PAIR.1,
                    indices: presets::mp478_mouth_region(),
                },
            }),
            other => Err(Error::InvalidInput(format!("unknown feature preset `{other}`"))),
        }
    }

    pub fn eye_indices(&self) -> BTreeSet<usize> {
        self.eyes.iter().flat_map(|e| e.indices.iter().copied()).collect()
    }

    pub fn mouth_indices(&self) -> BTreeSet<usize> {
        self.mouth.indices.iter().copied().collect()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.eyes.is_empty() {
            return Err(Error::InvalidInput("at least one eye region is required".into()));
        }
        let regions = self.eyes.iter().map(|r| ("eye", r)).chain([("mouth", &self.mouth)]);
        for (name, r) in regions {
            if r.top == r.bottom {
                return Err(Error::InvalidInput(format!(
                    "{name} top and bottom indices coincide ({})",
                    r.top
                )));
            }
            if let Some(&i) = [r.top, r.bottom].iter().chain(&r.indices).find(|&&i| i >= k) {
                return Err(Error::InvalidInput(format!(
                    "{name} index {i} out of range for K = {k}"
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for eye in &self.eyes {
            for &i in &eye.indices {
                if !seen.insert(i) {
                    return Err(Error::InvalidInput(format!(
                        "eye index {i} listed in more than one eye"
                    )));
                }
            }
        }
        if let Some(i) = self.mouth_indices().intersection(&seen).next() {
            return Err(Error::InvalidInput(format!(
                "index {i} is both an eye and a mouth landmark"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditGains {
    pub eye: f64,
    pub mouth: f64,
}

impl Default for EditGains {
    fn default() -> Self {
        EditGains { eye: 1.0, mouth: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetargetConfig {
    pub features: FeatureIndexConfig,
    pub s_min: f64,
    pub s_max: f64,
    pub edit_gains: Option<EditGains>,
    /// Coordinate used for aperture measurement (1 = image `y`).
    pub vertical_axis: usize,
    /// Keep one ratio per eye instead of averaging them.
    pub per_eye: bool,
}

impl RetargetConfig {
    pub fn new(features: FeatureIndexConfig) -> Self {
        RetargetConfig {
            features,
            s_min: 0.25,
            s_max: 4.0,
            edit_gains: None,
            vertical_axis: 1,
            per_eye: false,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_min <= 1.0 && self.s_max >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "clamp bounds must satisfy 0 < s_min <= 1 <= s_max, got [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        if self.vertical_axis > 2 {
            return Err(Error::InvalidInput(format!(
                "vertical_axis {} is not 0, 1 or 2",
                self.vertical_axis
            )));
        }
        self.features.validate(k)
    }

    fn check(&self, sets: &[&LandmarkSet]) -> Result<()> {
        for s in sets {
            if s.topology_id() != self.features.topology_id {
                return Err(Error::topology(&self.features.topology_id, s.topology_id()));
            }
            sets[0].ensure_compatible(s)?;
        }
        self.validate(sets[0].len())
    }
}

/// Retarget config file. Either `preset` or explicit `eyes` + `mouth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetargetConfigFile {
    pub preset: Option<String>,
    pub topology_id: Option<String>,
    pub eyes: Option<Vec<FeatureRegion>>,
    pub mouth: Option<FeatureRegion>,
    pub s_min: f64,
    pub s_max: f64,
    pub vertical_axis: usize,
    pub per_eye: bool,
    pub edit_gains: Option<EditGains>,
}

impl Default for RetargetConfigFile {
    fn default() -> Self {
        RetargetConfigFile {
            preset: None,
            topology_id: None,
            eyes: None,
            mouth: None,
            s_min: 0.25,
            s_max: 4.0,
            vertical_axis: 1,
            per_eye: false,
            edit_gains: None,
        }
    }
}

impl RetargetConfigFile {
    /// Resolves the feature indices, defaulting to the preset named after
    /// `topology_id` when nothing explicit is given.
    pub fn resolve(&self, topology_id: &str) -> Result<RetargetConfig> {
        let features = match (&self.preset, &self.eyes, &self.mouth) {
            (Some(name), None, None) => FeatureIndexConfig::preset(name)?,
            (None, Some(eyes), Some(mouth)) => FeatureIndexConfig {
                topology_id: self.topology_id.clone().unwrap_or_else(|| topology_id.to_string()),
                eyes: eyes.clone(),
                mouth: mouth.clone(),
            },
            (None, None, None) => FeatureIndexConfig::preset(topology_id)?,
            _ => {
                return Err(Error::InvalidInput(
                    "retarget config needs either `preset` or both `eyes` and `mouth`".into(),
                ))
            }
        };
        Ok(RetargetConfig {
            features,
            s_min: self.s_min,
            s_max: self.s_max,
            edit_gains: self.edit_gains,
            vertical_axis: self.vertical_axis,
            per_eye: self.per_eye,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors {
    /// Eye ratio applied to every eye (mean of `s_eye_each` before
    /// clamping) unless `per_eye` is set.
    pub s_eye: f64,
    /// Clamped ratio for each eye, in config order.
    pub s_eye_each: Vec<f64>,
    pub s_mouth: f64,
    pub per_eye: bool,
    /// Whether any ratio hit the clamp bounds.
    pub clamped: bool,
}

impl ScaleFactors {
    pub fn unit(eyes: usize) -> Self {
        ScaleFactors {
            s_eye: 1.0,
            s_eye_each: vec![1.0; eyes],
            s_mouth: 1.0,
            per_eye: false,
            clamped: false,
        }
    }

    fn eye(&self, k: usize) -> f64 {
        if self.per_eye {
            self.s_eye_each[k]
        } else {
            self.s_eye
        }
    }
}

/// Removes the observed face's expression: `observed − L_fit + L_fit|β=0`.
pub fn neutralize(
    observed: &LandmarkSet,
    model: &MorphableModel,
    opts: &FitOptions,
) -> Result<(LandmarkSet, FitResult)> {
    let f = fit(model, observed, opts)?;
    let neutral = neutralize_with(observed, model, &f)?;
    Ok((neutral, f))
}

fn neutralize_with(observed: &LandmarkSet, model: &MorphableModel, f: &FitResult) -> Result<LandmarkSet> {
    observed
        .sub(&fitted_projection(model, f)?)?
        .add(&neutral_projection(model, f)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeutralFrame {
    pub index: usize,
    pub neutral: LandmarkSet,
    pub fit: FitResult,
}

/// Picks the frame with the smallest fitted expression norm `‖β‖₂` (lowest
/// index on ties) and returns it neutralized.
///
/// Frames are first scanned every `stride` frames (plus the last one); the
/// neighbourhood of the coarse winner is then fitted densely. With
/// `stride = 1` every frame is fitted.
pub fn select_neutral_frame(
    sequence: &[LandmarkSet],
    model: &MorphableModel,
    opts: &FitOptions,
    stride: usize,
    exec: Execution,
) -> Result<NeutralFrame> {
    if sequence.is_empty() {
        return Err(Error::EmptySequence);
    }
    let stride = stride.max(1);
    let n = sequence.len();
    let mut coarse: Vec<usize> = (0..n).step_by(stride).collect();
    if *coarse.last().expect("non-empty") != n - 1 {
        coarse.push(n - 1);
    }
    let fit_all = |idx: &[usize]| -> Result<Vec<(usize, FitResult)>> {
        exec::try_map(exec, idx, |_, &i| fit(model, &sequence[i], opts).map(|f| (i, f)))
    };
    let mut fitted = fit_all(&coarse)?;
    let best = |fs: &[(usize, FitResult)]| -> usize {
        let mut best = 0;
        for (j, (i, f)) in fs.iter().enumerate() {
            let (bi, bf) = &fs[best];
            let (a, b) = (f.beta_norm(), bf.beta_norm());
            if a < b || (a == b && i < bi) {
                best = j;
            }
        }
        best
    };
    let winner = fitted[best(&fitted)].0;
    let lo = winner.saturating_sub(stride - 1);
    let hi = (winner + stride).min(n);
    let refine: Vec<usize> = (lo..hi).filter(|i| !coarse.contains(i)).collect();
    fitted.extend(fit_all(&refine)?);
    let (index, f) = fitted.swap_remove(best(&fitted));
    let neutral = neutralize_with(&sequence[index], model, &f)?;
    Ok(NeutralFrame { index, neutral, fit: f })
}

fn aperture(l: &LandmarkSet, r: &FeatureRegion, axis: usize) -> f64 {
    l[r.bottom][axis] - l[r.top][axis]
}

/// Ratio of reference to driver neutral apertures for each feature, clamped
/// to `[s_min, s_max]`.
pub fn compute_scale_factors(
    ref_neutral: &LandmarkSet,
    drv_neutral: &LandmarkSet,
    cfg: &RetargetConfig,
) -> Result<ScaleFactors> {
    cfg.check(&[ref_neutral, drv_neutral])?;
    let axis = cfg.vertical_axis;
    let ratio = |name: String, r: &FeatureRegion| -> Result<f64> {
        let d = aperture(drv_neutral, r, axis);
        if !(d.abs() >= APERTURE_EPSILON) {
            return Err(Error::DegenerateAperture {
                feature: name,
                aperture: d,
                epsilon: APERTURE_EPSILON,
            });
        }
        Ok(aperture(ref_neutral, r, axis) / d)
    };
    let raw_eyes = cfg
        .features
        .eyes
        .iter()
        .enumerate()
        .map(|(k, r)| ratio(format!("eye {k}"), r))
        .collect::<Result<Vec<_>>>()?;
    let raw_mouth = ratio("mouth".into(), &cfg.features.mouth)?;
    let raw_eye = raw_eyes.iter().sum::<f64>() / raw_eyes.len() as f64;

    let mut clamped = false;
    let mut clamp = |s: f64| {
        let c = s.clamp(cfg.s_min, cfg.s_max);
        clamped |= c != s;
        c
    };
    let s_eye_each: Vec<f64> = raw_eyes.into_iter().map(&mut clamp).collect();
    let s_eye = clamp(raw_eye);
    let s_mouth = clamp(raw_mouth);
    // Only report clamping of the ratios actually applied.
    let clamped = if cfg.per_eye {
        clamped
    } else {
        s_eye != raw_eye || s_mouth != raw_mouth
    };
    Ok(ScaleFactors {
        s_eye,
        s_eye_each,
        s_mouth,
        per_eye: cfg.per_eye,
        clamped,
    })
}

fn apply(
    ref_neutral: &LandmarkSet,
    drv_frame: &LandmarkSet,
    drv_neutral: &LandmarkSet,
    scales: &ScaleFactors,
    cfg: &RetargetConfig,
    gains: EditGains,
) -> Result<LandmarkSet> {
    cfg.check(&[ref_neutral, drv_frame, drv_neutral])?;
    if scales.s_eye_each.len() != cfg.features.eyes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} per-eye scales for {} eyes",
            scales.s_eye_each.len(),
            cfg.features.eyes.len()
        )));
    }
    let mut row_scale = vec![1.0; ref_neutral.len()];
    for (k, eye) in cfg.features.eyes.iter().enumerate() {
        let s = scales.eye(k) * gains.eye;
        for &i in &eye.indices {
            row_scale[i] = s;
        }
    }
    let s_mouth = scales.s_mouth * gains.mouth;
    for &i in &cfg.features.mouth.indices {
        row_scale[i] = s_mouth;
    }
    let delta = drv_frame.sub(drv_neutral)?;
    let points = ref_neutral
        .points()
        .iter()
        .zip(delta.points())
        .zip(&row_scale)
        .map(|((r, d), &s)| {
            if s == 1.0 {
                [r[0] + d[0], r[1] + d[1], r[2] + d[2]]
            } else {
                [r[0] + s * d[0], r[1] + s * d[1], r[2] + s * d[2]]
            }
        })
        .collect();
    LandmarkSet::new(ref_neutral.topology_id(), points)
}

/// Transfers the driver's motion `drv_frame − drv_neutral` onto the neutral
/// reference. Eye and mouth rows move by `s·ΔL`, all other rows by `ΔL`.
pub fn retarget(
    ref_neutral: &LandmarkSet,
    drv_frame: &LandmarkSet,
    drv_neutral: &LandmarkSet,
    scales: &ScaleFactors,
    cfg: &RetargetConfig,
) -> Result<LandmarkSet> {
    apply(ref_neutral, drv_frame, drv_neutral, scales, cfg, EditGains::default())
}

/// [`retarget`] with each feature's scale multiplied by the user gain in
/// `cfg.edit_gains`. A gain of 0 freezes the feature at the reference's
/// neutral pose.
pub fn edit_expression(
    ref_neutral: &LandmarkSet,
    drv_frame: &LandmarkSet,
    drv_neutral: &LandmarkSet,
    scales: &ScaleFactors,
    cfg: &RetargetConfig,
) -> Result<LandmarkSet> {
    let gains = cfg
        .edit_gains
        .ok_or_else(|| Error::InvalidInput("expression editing needs edit_gains".into()))?;
    for (feature, gain) in [("eye", gains.eye), ("mouth", gains.mouth)] {
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(Error::NegativeGain {
                feature: feature.into(),
                gain,
            });
        }
    }
    apply(ref_neutral, drv_frame, drv_neutral, scales, cfg, gains)
}

/// Retargets (or edits, when gains are configured) every driver frame.
pub fn retarget_sequence(
    ref_neutral: &LandmarkSet,
    frames: &[LandmarkSet],
    drv_neutral: &LandmarkSet,
    scales: &ScaleFactors,
    cfg: &RetargetConfig,
    exec: Execution,
) -> Result<Vec<LandmarkSet>> {
    exec::try_map(exec, frames, |_, frame| {
        if cfg.edit_gains.is_some() {
            edit_expression(ref_neutral, frame, drv_neutral, scales, cfg)
        } else {
            retarget(ref_neutral, frame, drv_neutral, scales, cfg)
        }
    })
}
