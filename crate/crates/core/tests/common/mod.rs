#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsp_core::fit::FitOptions;
use hsp_core::landmarks::LandmarkSet;
use hsp_core::model::MorphableModel;
use hsp_core::pose::PoseParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Ridge weights small enough that noiseless fits are unbiased.
pub fn exact_opts() -> FitOptions {
    FitOptions {
        lambda_id: 1e-8,
        lambda_exp: 1e-8,
        max_iterations: 100,
        tolerance: 1e-12,
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

pub fn random_pose(rng: &mut ChaCha8Rng, max_deg: f64) -> PoseParams {
    PoseParams::from_euler_deg(
        rng.random_range(-max_deg..max_deg),
        rng.random_range(-max_deg..max_deg),
        rng.random_range(-max_deg..max_deg),
        [
            rng.random_range(0.3..0.7),
            rng.random_range(0.3..0.7),
            rng.random_range(-0.1..0.1),
        ],
        rng.random_range(0.8..1.25),
    )
    .unwrap()
}

pub struct Instance {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub pose: PoseParams,
    pub observed: LandmarkSet,
}

pub fn random_instance(model: &MorphableModel, rng: &mut ChaCha8Rng) -> Instance {
    let alpha = uniform(rng, model.num_identity(), 1.0);
    let beta = uniform(rng, model.num_expression(), 0.6);
    let pose = random_pose(rng, 25.0);
    let observed = model.project(&model.synthesize(&alpha, &beta).unwrap(), &pose).unwrap();
    Instance {
        alpha,
        beta,
        pose,
        observed,
    }
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn hsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsp"))
        .args(args)
        .env_remove("HSP_LOG")
        .output()
        .expect("spawn hsp")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Generates the bundled fixture into `dir/fixture`.
pub fn make_fixture_dir(dir: &Path, seed: u64, frames: usize) -> PathBuf {
    let out = dir.join("fixture");
    let o = hsp(&[
        "make-fixture",
        "--seed",
        &seed.to_string(),
        "--frames",
        &frames.to_string(),
        "--out-dir",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

/// Every file under `dir` (relative path, bytes), sorted.
pub fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
