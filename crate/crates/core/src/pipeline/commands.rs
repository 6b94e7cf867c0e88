//! Command implementations. Each command computes everything in memory and
//! writes its outputs only once every step has succeeded.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, derive_seed, Execution};
use crate::fit::{fit, FitResult};
use crate::io::{read_json, to_json_bytes, write_atomic};
use crate::landmarks::{LandmarkFile, LandmarkSet, MP478};
use crate::masks::{
    align_hair_mask, block_mask_with, compose_cloth_mask, dilate_with, read_rgb, recompose_background, rgb_png_bytes,
    scale_foreground, shoulder_rects, AugmentSpec, Mask,
};
use crate::metrics::{evaluate, MetricReport};
use crate::model::MorphableModel;
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::fixture::{make_fixture, FixtureManifest};
use crate::pipeline::overlay;
use crate::presets::MP478_STABLE;
use crate::retarget::{
    compute_scale_factors, neutralize, retarget_sequence, select_neutral_frame, FeatureIndexConfig, ScaleFactors,
};

const STAGE_SHOULDER: u64 = 10;
const STAGE_AUGMENT: u64 = 11;

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub seed: Option<u64>,
    pub exec: Execution,
    pub verify: bool,
}

impl Context {
    pub fn new(config: PipelineConfig) -> Self {
        Context {
            config,
            seed: None,
            exec: Execution::default(),
            verify: false,
        }
    }

    fn load_model(&self, explicit: Option<&Path>) -> Result<MorphableModel> {
        let path = explicit
            .or(self.config.model.as_deref())
            .ok_or_else(|| Error::InvalidInput("no model given (--model or config `model`)".into()))?;
        MorphableModel::read(path)
    }
}

/// Pending output files, written together by [`Outputs::commit`].
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn push(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn commit(self) -> Result<()> {
        for (path, bytes) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_atomic(path, bytes)?;
        }
        Ok(())
    }
}

fn verify_failed(what: String) -> Error {
    Error::InvariantViolation(what)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub topology_id: String,
    pub frames: Vec<FitResult>,
}

/// Fits every frame of a landmark file.
pub fn cmd_fit(ctx: &Context, model: Option<&Path>, landmarks: &Path, out: &Path) -> Result<FitFile> {
    let model = ctx.load_model(model)?;
    let sets = LandmarkFile::read_sets(landmarks)?;
    let opts = ctx.config.fit;
    let frames = exec::try_map(ctx.exec, &sets, |i, s| fit(&model, s, &opts).map_err(|e| e.in_frame(i)))?;
    if ctx.verify {
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.residual_rms.is_finite()) {
            return Err(verify_failed(format!(
                "frame {i}: residual {} is not finite",
                f.residual_rms
            )));
        }
    }
    let result = FitFile {
        topology_id: model.topology_id().to_string(),
        frames,
    };
    let mut outputs = Outputs::default();
    outputs.push(out.to_path_buf(), to_json_bytes(&result));
    outputs.commit()?;
    info!("fitted {} frames", result.frames.len());
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct RetargetArgs {
    pub model: Option<PathBuf>,
    pub reference: PathBuf,
    pub driving: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetSidecar {
    pub neutral_index: usize,
    pub scale_factors: ScaleFactors,
    pub reference_fit_residual: f64,
    pub neutral_fit_residual: f64,
    pub neutral_beta_norm: f64,
    pub frames: usize,
}

/// Neutralizes the reference, picks the driver's neutral frame and writes
/// `retargeted.json`, `reference_neutral.json` and `retarget_sidecar.json`.
pub fn cmd_retarget(ctx: &Context, args: &RetargetArgs) -> Result<RetargetSidecar> {
    let model = ctx.load_model(args.model.as_deref())?;
    let cfg = ctx.config.retarget.resolve(model.topology_id())?;
    let mut reference = LandmarkFile::read_sets(&args.reference)?;
    if reference.len() > 1 {
        warn!("reference has {} frames; using the first", reference.len());
    }
    let reference = reference.swap_remove(0);
    let driving = LandmarkFile::read_sets(&args.driving)?;
    let opts = ctx.config.fit;

    let (ref_neutral, ref_fit) = neutralize(&reference, &model, &opts)?;
    let neutral = select_neutral_frame(&driving, &model, &opts, ctx.config.stride, ctx.exec)?;
    let scales = compute_scale_factors(&ref_neutral, &neutral.neutral, &cfg)?;
    if scales.clamped {
        warn!("scale factors hit the clamp bounds: {:?}", scales);
    }
    let out = retarget_sequence(&ref_neutral, &driving, &neutral.neutral, &scales, &cfg, ctx.exec)?;

    if ctx.verify {
        let at_neutral = retarget_sequence(
            &ref_neutral,
            std::slice::from_ref(&neutral.neutral),
            &neutral.neutral,
            &scales,
            &cfg,
            Execution::Sequential,
        )?;
        let d = at_neutral[0].max_abs_diff(&ref_neutral);
        if d != 0.0 {
            return Err(verify_failed(format!(
                "driver neutral does not map to the reference neutral (off by {d})"
            )));
        }
        if let Some(i) = out
            .iter()
            .position(|s| s.points().iter().flatten().any(|v| !v.is_finite()))
        {
            return Err(verify_failed(format!("frame {i} has non-finite landmarks")));
        }
    }

    let sidecar = RetargetSidecar {
        neutral_index: neutral.index,
        scale_factors: scales,
        reference_fit_residual: ref_fit.residual_rms,
        neutral_fit_residual: neutral.fit.residual_rms,
        neutral_beta_norm: neutral.fit.beta_norm(),
        frames: out.len(),
    };
    let topo = model.topology_id();
    let mut outputs = Outputs::default();
    outputs.push(
        args.out_dir.join("retargeted.json"),
        to_json_bytes(&LandmarkFile::from_sets(topo, &out)),
    );
    outputs.push(
        args.out_dir.join("reference_neutral.json"),
        to_json_bytes(&LandmarkFile::from_sets(topo, std::slice::from_ref(&ref_neutral))),
    );
    outputs.push(args.out_dir.join("retarget_sidecar.json"), to_json_bytes(&sidecar));
    outputs.commit()?;
    info!(
        "retargeted {} frames (neutral frame {}, s_eye {:.4}, s_mouth {:.4})",
        sidecar.frames, sidecar.neutral_index, sidecar.scale_factors.s_eye, sidecar.scale_factors.s_mouth
    );
    Ok(sidecar)
}

#[derive(Debug, Clone, Default)]
pub struct MasksArgs {
    pub foreground: PathBuf,
    pub cloth: PathBuf,
    pub hair_donor: Option<PathBuf>,
    pub donor_landmarks: Option<PathBuf>,
    pub target_landmarks: Option<PathBuf>,
    /// Landmark file whose first frame holds normalized shoulder points.
    pub shoulders: Option<PathBuf>,
    pub frame: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasksSidecar {
    pub seed: Option<u64>,
    pub width: usize,
    pub height: usize,
    pub dilation_radius: usize,
    pub block: [usize; 2],
    pub foreground_pixels: usize,
    pub block_pixels: usize,
    pub cloth_pixels: usize,
    pub hair_pixels: Option<usize>,
    pub rect_pixels: Option<usize>,
    pub augmented: bool,
    pub outputs: Vec<String>,
}

fn first_frame(path: &Path) -> Result<LandmarkSet> {
    Ok(LandmarkFile::read_sets(path)?.swap_remove(0))
}

fn stable_indices(cfg: &PipelineConfig, landmarks: &LandmarkSet) -> Vec<usize> {
    match &cfg.stable_indices {
        Some(v) => v.clone(),
        None if landmarks.topology_id() == MP478 => MP478_STABLE.to_vec(),
        None => (0..landmarks.len()).collect(),
    }
}

fn check_mask_invariants(fg: &Mask, dilated: &Mask, block: &Mask, ctx: &Context) -> Result<()> {
    if !fg.is_subset_of(dilated) || !dilated.is_subset_of(block) {
        return Err(verify_failed("foreground is not covered by its block mask".into()));
    }
    let spec = ctx.config.block;
    for y in 0..block.height() {
        for x in 0..block.width() {
            let (ty, tx) = (y / spec.k_h * spec.k_h, x / spec.k_w * spec.k_w);
            if block.get(x, y) != block.get(tx, ty) {
                return Err(verify_failed(format!(
                    "block mask not constant on the tile at ({tx}, {ty})"
                )));
            }
        }
    }
    if block_mask_with(block, spec, Execution::Sequential)? != *block {
        return Err(verify_failed("block mask is not idempotent".into()));
    }
    Ok(())
}

/// Builds the inpainting masks and, when the images are given, the
/// augmented training pair and recomposed background.
pub fn cmd_masks(ctx: &Context, args: &MasksArgs) -> Result<MasksSidecar> {
    let cfg = &ctx.config;
    let fg = Mask::read_png(&args.foreground)?;
    let cloth = Mask::read_png(&args.cloth)?;
    fg.ensure_same_size(&cloth)?;
    let (w, h) = (fg.width(), fg.height());
    let needs_seed = args.shoulders.is_some() || args.frame.is_some();
    let seed = if needs_seed {
        Some(cfg.require_seed(ctx.seed)?)
    } else {
        ctx.seed.or(cfg.seed)
    };

    let dilated = dilate_with(&fg, cfg.dilation_radius, ctx.exec);
    let block = block_mask_with(&dilated, cfg.block, ctx.exec)?;

    let hair = match (&args.hair_donor, &args.donor_landmarks, &args.target_landmarks) {
        (Some(m), Some(d), Some(t)) => {
            let donor = first_frame(d)?;
            let target = first_frame(t)?;
            let stable = stable_indices(cfg, &donor);
            let hair = align_hair_mask(&donor, &target, &Mask::read_png(m)?, &stable)?;
            fg.ensure_same_size(&hair)?;
            Some(hair)
        }
        (None, None, None) => None,
        _ => {
            return Err(Error::InvalidInput(
                "hair alignment needs --hair-donor, --donor-landmarks and --target-landmarks together".into(),
            ))
        }
    };
    let rects = match &args.shoulders {
        Some(path) => {
            let pts: Vec<[f64; 2]> = first_frame(path)?
                .points()
                .iter()
                .map(|p| [p[0] * w as f64, p[1] * h as f64])
                .collect();
            let s = derive_seed(seed.expect("seed checked above"), STAGE_SHOULDER, 0);
            Some(shoulder_rects(&pts, s, &cfg.shoulder, w, h))
        }
        None => None,
    };
    let zeros = Mask::zeros(w, h);
    let cloth_new = compose_cloth_mask(
        &cloth,
        hair.as_ref().unwrap_or(&zeros),
        rects.as_ref().unwrap_or(&zeros),
    )?;

    let mut outputs = Outputs::default();
    let mut names = Vec::new();
    let mut add = |outputs: &mut Outputs, name: &str, bytes: Vec<u8>| {
        names.push(name.to_string());
        outputs.push(args.out_dir.join(name), bytes);
    };

    let augmented = match (&args.frame, &args.background) {
        (Some(f), Some(b)) => {
            let frame = read_rgb(f)?;
            let background = read_rgb(b)?;
            let spec = AugmentSpec {
                rng_seed: derive_seed(seed.expect("seed checked above"), STAGE_AUGMENT, 0),
                ..cfg.augment
            };
            let (image, mask) = scale_foreground(&fg, &frame, &background, &spec)?;
            let recomposed = recompose_background(&background, &frame, &cloth_new)?;
            add(&mut outputs, "augmented.png", rgb_png_bytes(&image));
            add(&mut outputs, "augmented_mask.png", mask.to_png_bytes());
            add(&mut outputs, "background_recomposed.png", rgb_png_bytes(&recomposed));
            true
        }
        (None, None) => false,
        _ => {
            return Err(Error::InvalidInput(
                "augmentation needs both --frame and --background".into(),
            ))
        }
    };

    if ctx.verify {
        check_mask_invariants(&fg, &dilated, &block, ctx)?;
        if !cloth_new.is_subset_of(&cloth)
            || hair.as_ref().is_some_and(|m| cloth_new.intersects(m))
            || rects.as_ref().is_some_and(|m| cloth_new.intersects(m))
        {
            return Err(verify_failed("cloth mask overlaps hair or shoulder rectangles".into()));
        }
    }

    add(&mut outputs, "foreground_block.png", block.to_png_bytes());
    add(&mut outputs, "cloth_new.png", cloth_new.to_png_bytes());
    if let Some(m) = &hair {
        add(&mut outputs, "hair_aligned.png", m.to_png_bytes());
    }
    if let Some(m) = &rects {
        add(&mut outputs, "shoulder_rects.png", m.to_png_bytes());
    }
    names.sort();
    let sidecar = MasksSidecar {
        seed,
        width: w,
        height: h,
        dilation_radius: cfg.dilation_radius,
        block: [cfg.block.k_h, cfg.block.k_w],
        foreground_pixels: fg.count(),
        block_pixels: block.count(),
        cloth_pixels: cloth_new.count(),
        hair_pixels: hair.as_ref().map(Mask::count),
        rect_pixels: rects.as_ref().map(Mask::count),
        augmented,
        outputs: names,
    };
    outputs.push(args.out_dir.join("masks_sidecar.json"), to_json_bytes(&sidecar));
    outputs.commit()?;
    Ok(sidecar)
}

/// Renders one overlay per frame; returns the number of images written.
pub fn cmd_render_overlay(ctx: &Context, landmarks: &Path, image_dir: Option<&Path>, out_dir: &Path) -> Result<usize> {
    let file: LandmarkFile = read_json(landmarks)?;
    let topo = file.topology_id.clone();
    let sets = file.into_sets()?;
    let features = FeatureIndexConfig::preset(&topo)
        .ok()
        .or_else(|| ctx.config.retarget.resolve(&topo).ok().map(|c| c.features));
    let images = exec::try_map(ctx.exec, &sets, |i, set| {
        let base = match image_dir {
            Some(dir) => Some(read_rgb(dir.join(format!("frame_{i:05}.png")))?),
            None => None,
        };
        Ok::<_, Error>(rgb_png_bytes(&overlay::render(set, base, features.as_ref())))
    })?;
    let n = images.len();
    let mut outputs = Outputs::default();
    for (i, bytes) in images.into_iter().enumerate() {
        outputs.push(out_dir.join(format!("overlay_{i:05}.png")), bytes);
    }
    outputs.commit()?;
    Ok(n)
}

/// Writes the synthetic fixture tree into `out_dir`.
pub fn cmd_make_fixture(out_dir: &Path, seed: u64, frames: usize) -> Result<FixtureManifest> {
    let fixture = make_fixture(seed, frames)?;
    let mut outputs = Outputs::default();
    for (name, bytes) in fixture.files {
        outputs.push(out_dir.join(name), bytes);
    }
    outputs.commit()?;
    Ok(fixture.manifest)
}

/// Pose and expression error between two sequences.
pub fn cmd_metrics(
    ctx: &Context,
    model: Option<&Path>,
    a: &Path,
    b: &Path,
    out: Option<&Path>,
    per_frame: bool,
) -> Result<MetricReport> {
    let model = ctx.load_model(model)?;
    let seq_a = LandmarkFile::read_sets(a)?;
    let seq_b = LandmarkFile::read_sets(b)?;
    let report = evaluate(&seq_a, &seq_b, &model, &ctx.config.fit, ctx.exec, per_frame)?;
    if let Some(out) = out {
        let mut outputs = Outputs::default();
        outputs.push(out.to_path_buf(), to_json_bytes(&report));
        outputs.commit()?;
    }
    Ok(report)
}
