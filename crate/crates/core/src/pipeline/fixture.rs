//! Synthetic end-to-end fixture with known ground truth.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::fit::FitOptions;
use crate::io::to_json_bytes;
use crate::landmarks::{LandmarkFile, LandmarkSet};
use crate::masks::{rgb_png_bytes, Mask};
use crate::model::{make_synthetic_model, MorphableModel};
use crate::pipeline::config::PipelineConfig;
use crate::pose::{euler_zyx_deg, PoseParams};
use crate::retarget::{compute_scale_factors, FeatureIndexConfig, RetargetConfig};

pub const FIXTURE_K: usize = 478;
pub const FIXTURE_N_ID: usize = 20;
pub const FIXTURE_N_EXP: usize = 30;
pub const FIXTURE_IMAGE_SIZE: usize = 512;
pub const FIXTURE_YAW_OFFSET_DEG: f64 = 10.0;
const SHOULDER_TOPOLOGY: &str = "shoulders2";

const STAGE_MODEL: u64 = 1;
const STAGE_COEFFS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTruth {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub pose: PoseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingTruth {
    pub alpha: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    pub poses: Vec<PoseParams>,
    pub neutral_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedScales {
    pub s_eye: f64,
    pub s_mouth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub seed: u64,
    pub frames: usize,
    pub image_size: [usize; 2],
    pub model_seed: u64,
    pub k: usize,
    pub n_id: usize,
    pub n_exp: usize,
    pub reference: FaceTruth,
    pub driving: DrivingTruth,
    /// Rotation pre-applied to every frame of `driving_yaw10.json`.
    pub yaw_offset_deg: f64,
    /// Expression offset added to every frame of `driving_beta_offset.json`.
    pub beta_offset: Vec<f64>,
    pub beta_offset_norm: f64,
    /// Aperture ratios of the ground-truth neutral reference and driver.
    pub expected_scale_factors: ExpectedScales,
    pub shoulder_points_px: Vec<[f64; 2]>,
    pub files: BTreeMap<String, String>,
}

pub struct Fixture {
    pub model: MorphableModel,
    pub manifest: FixtureManifest,
    /// Relative path → file contents, in write order.
    pub files: Vec<(String, Vec<u8>)>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

fn observe(model: &MorphableModel, alpha: &[f64], beta: &[f64], pose: &PoseParams) -> Result<LandmarkSet> {
    model.project(&model.synthesize(alpha, beta)?, pose)
}

fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0
}

/// Builds the fixture tree in memory. Same seed → identical bytes.
pub fn make_fixture(seed: u64, frames: usize) -> Result<Fixture> {
    if frames == 0 {
        return Err(Error::InvalidInput("fixture needs at least one frame".into()));
    }
    let model_seed = derive_seed(seed, STAGE_MODEL, 0);
    let model = make_synthetic_model(model_seed, FIXTURE_K, FIXTURE_N_ID, FIXTURE_N_EXP)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STAGE_COEFFS, 0));

    let reference = FaceTruth {
        alpha: uniform(&mut rng, FIXTURE_N_ID, 1.0),
        beta: uniform(&mut rng, FIXTURE_N_EXP, 0.6),
        pose: PoseParams::from_euler_deg(-4.0, 3.0, 2.0, [0.5, 0.4, 0.0], 1.05)?,
    };
    let drv_alpha = uniform(&mut rng, FIXTURE_N_ID, 1.0);
    let v = uniform(&mut rng, FIXTURE_N_EXP, 0.6);
    let w = uniform(&mut rng, FIXTURE_N_EXP, 0.6);
    let neutral_index = ((2 * frames) / 3).min(frames - 1);
    let mut betas = Vec::with_capacity(frames);
    let mut poses = Vec::with_capacity(frames);
    for t in 0..frames {
        let u = (t as f64 - neutral_index as f64) / frames as f64;
        betas.push(
            v.iter()
                .zip(&w)
                .map(|(a, b)| 1.2 * u * a + 2.0 * u * u * b)
                .collect::<Vec<f64>>(),
        );
        let phase = 2.0 * std::f64::consts::PI * t as f64 / frames as f64;
        poses.push(PoseParams::from_euler_deg(
            6.0 * phase.sin(),
            4.0 * phase.cos(),
            -3.0 * phase.sin(),
            [0.5 + 0.01 * phase.sin(), 0.42, 0.0],
            0.95,
        )?);
    }
    let driving = DrivingTruth {
        alpha: drv_alpha,
        betas,
        poses,
        neutral_index,
    };
    let mut beta_offset = uniform(&mut rng, FIXTURE_N_EXP, 1.0);
    let norm = beta_offset.iter().map(|x| x * x).sum::<f64>().sqrt();
    beta_offset.iter_mut().for_each(|x| *x *= 0.5 / norm);
    let beta_offset_norm = beta_offset.iter().map(|x| x * x).sum::<f64>().sqrt();

    let reference_set = observe(&model, &reference.alpha, &reference.beta, &reference.pose)?;
    let driving_sets = (0..frames)
        .map(|t| observe(&model, &driving.alpha, &driving.betas[t], &driving.poses[t]))
        .collect::<Result<Vec<_>>>()?;
    let yaw = euler_zyx_deg(FIXTURE_YAW_OFFSET_DEG, 0.0, 0.0);
    let yaw_sets = (0..frames)
        .map(|t| {
            let p = &driving.poses[t];
            let c = p.translation();
            observe(
                &model,
                &driving.alpha,
                &driving.betas[t],
                &p.rotated_about(&yaw, [c.x, c.y, c.z])?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let offset_sets = (0..frames)
        .map(|t| {
            let b: Vec<f64> = driving.betas[t].iter().zip(&beta_offset).map(|(a, d)| a + d).collect();
            observe(&model, &driving.alpha, &b, &driving.poses[t])
        })
        .collect::<Result<Vec<_>>>()?;

    let zeros = vec![0.0; FIXTURE_N_EXP];
    let gt_ref_neutral = observe(&model, &reference.alpha, &zeros, &reference.pose)?;
    let gt_drv_neutral = observe(&model, &driving.alpha, &zeros, &driving.poses[neutral_index])?;
    let scales = compute_scale_factors(
        &gt_ref_neutral,
        &gt_drv_neutral,
        &RetargetConfig::new(FeatureIndexConfig::preset(model.topology_id())?),
    )?;

    // Donor portrait: the reference face, shifted and enlarged in the image.
    let donor_points = reference_set
        .points()
        .iter()
        .map(|p| [0.5 + 1.1 * (p[0] - 0.5) - 0.03, 0.4 + 1.1 * (p[1] - 0.4) + 0.02, p[2]])
        .collect();
    let donor_set = LandmarkSet::new(model.topology_id(), donor_points)?;

    let size = FIXTURE_IMAGE_SIZE;
    let s = size as f64;
    let shoulder_points_px = vec![[0.32 * s, 0.78 * s], [0.68 * s, 0.78 * s]];
    let shoulders = LandmarkFile {
        topology_id: SHOULDER_TOPOLOGY.into(),
        frames: vec![shoulder_points_px.iter().map(|p| [p[0] / s, p[1] / s, 0.0]).collect()],
    };

    let px = |x: usize, y: usize| (x as f64 + 0.5, y as f64 + 0.5);
    let head = |x: f64, y: f64| in_ellipse(x, y, 0.5 * s, 0.4 * s, 0.17 * s, 0.23 * s);
    let torso = |x: f64, y: f64| y >= 0.7 * s && (x - 0.5 * s).abs() <= 0.2 * s + 0.6 * (y - 0.7 * s);
    let neck = |x: f64, y: f64| (0.6 * s..0.72 * s).contains(&y) && (x - 0.5 * s).abs() <= 0.07 * s;
    let foreground = Mask::from_fn(size, size, |x, y| {
        let (x, y) = px(x, y);
        head(x, y) || torso(x, y) || neck(x, y)
    });
    let cloth = Mask::from_fn(size, size, |x, y| {
        let (x, y) = px(x, y);
        torso(x, y) && y >= 0.72 * s
    });
    let hair = Mask::from_fn(size, size, |x, y| {
        let (x, y) = px(x, y);
        let cap = in_ellipse(x, y, 0.5 * s, 0.37 * s, 0.2 * s, 0.25 * s)
            && !in_ellipse(x, y, 0.5 * s, 0.42 * s, 0.15 * s, 0.2 * s);
        let strands =
            (0.38 * s..0.82 * s).contains(&y) && (x - 0.5 * s).abs() >= 0.14 * s && (x - 0.5 * s).abs() <= 0.2 * s;
        cap || strands
    });
    let background = RgbImage::from_fn(size as u32, size as u32, |x, y| {
        Rgb([(x / 2) as u8, (y / 2) as u8, 96 + ((x + y) % 32) as u8])
    });
    let frame = RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let (fx, fy) = px(x as usize, y as usize);
        if head(fx, fy) {
            Rgb([224, 172, 140 + (y % 16) as u8])
        } else if cloth.get(x as usize, y as usize) {
            Rgb([40, 60, 180 + (x % 32) as u8])
        } else if foreground.get(x as usize, y as usize) {
            Rgb([210, 160, 130])
        } else {
            *background.get_pixel(x, y)
        }
    });

    // Noiseless data, so the ridge prior only adds bias.
    let config = PipelineConfig {
        model: Some("model.json".into()),
        fit: FitOptions {
            lambda_id: 1e-10,
            lambda_exp: 1e-10,
            max_iterations: 100,
            tolerance: 1e-12,
        },
        seed: Some(seed),
        ..PipelineConfig::default()
    };

    let mut described = BTreeMap::new();
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut add = |name: &str, what: &str, bytes: Vec<u8>| {
        described.insert(name.to_string(), what.to_string());
        files.push((name.to_string(), bytes));
    };
    let topo = model.topology_id().to_string();
    add(
        "model.json",
        "synthetic morphable model",
        to_json_bytes(&model.to_file()),
    );
    add("config.json", "pipeline config", to_json_bytes(&config));
    add(
        "reference.json",
        "reference landmarks (one expressive frame)",
        to_json_bytes(&LandmarkFile::from_sets(&topo, std::slice::from_ref(&reference_set))),
    );
    add(
        "driving.json",
        "driving sequence",
        to_json_bytes(&LandmarkFile::from_sets(&topo, &driving_sets)),
    );
    add(
        "driving_yaw10.json",
        "driving sequence rotated by yaw_offset_deg",
        to_json_bytes(&LandmarkFile::from_sets(&topo, &yaw_sets)),
    );
    add(
        "driving_beta_offset.json",
        "driving sequence with beta_offset added",
        to_json_bytes(&LandmarkFile::from_sets(&topo, &offset_sets)),
    );
    add(
        "donor_landmarks.json",
        "landmarks of the hair donor portrait",
        to_json_bytes(&LandmarkFile::from_sets(&topo, std::slice::from_ref(&donor_set))),
    );
    add(
        "shoulders.json",
        "shoulder keypoints (normalized)",
        to_json_bytes(&shoulders),
    );
    add("foreground.png", "foreground mask", foreground.to_png_bytes());
    add("cloth.png", "cloth mask", cloth.to_png_bytes());
    add("hair_donor.png", "donor hair mask", hair.to_png_bytes());
    add("frame.png", "reference frame", rgb_png_bytes(&frame));
    add("background.png", "inpainted background", rgb_png_bytes(&background));

    let manifest = FixtureManifest {
        seed,
        frames,
        image_size: [size, size],
        model_seed,
        k: FIXTURE_K,
        n_id: FIXTURE_N_ID,
        n_exp: FIXTURE_N_EXP,
        reference,
        driving,
        yaw_offset_deg: FIXTURE_YAW_OFFSET_DEG,
        beta_offset,
        beta_offset_norm,
        expected_scale_factors: ExpectedScales {
            s_eye: scales.s_eye,
            s_mouth: scales.s_mouth,
        },
        shoulder_points_px,
        files: described,
    };
    files.push(("manifest.json".into(), to_json_bytes(&manifest)));
    Ok(Fixture { model, manifest, files })
}
