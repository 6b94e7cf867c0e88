mod common;

use common::*;
use hsp_core::exec::Execution;
use hsp_core::fit::FitOptions;
use hsp_core::landmarks::{LandmarkFile, LandmarkSet};
use hsp_core::model::make_synthetic_model;
use hsp_core::pipeline::make_fixture;
use hsp_core::retarget::{
    compute_scale_factors, neutralize, retarget, retarget_sequence, select_neutral_frame, FeatureIndexConfig,
    FeatureRegion, RetargetConfig, ScaleFactors,
};
use hsp_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture_sequence(seed: u64, frames: usize) -> (hsp_core::pipeline::Fixture, Vec<LandmarkSet>) {
    let fx = make_fixture(seed, frames).unwrap();
    let bytes = &fx.files.iter().find(|(n, _)| n == "driving.json").unwrap().1;
    let seq = serde_json::from_slice::<LandmarkFile>(bytes)
        .unwrap()
        .into_sets()
        .unwrap();
    (fx, seq)
}

#[test]
fn neutralize_matches_zero_expression_synthesis() {
    let model = make_synthetic_model(8, 478, 20, 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    for _ in 0..5 {
        let inst = random_instance(&model, &mut rng);
        let (n, f) = neutralize(&inst.observed, &model, &exact_opts()).unwrap();
        let truth = model
            .project(&model.synthesize(&inst.alpha, &[0.0; 30]).unwrap(), &inst.pose)
            .unwrap();
        assert!(n.rms_diff(&truth) < 1e-4);
        assert!(f.beta_norm() > 0.1);
    }
}

#[test]
fn neutral_input_passes_through() {
    let model = make_synthetic_model(8, 478, 20, 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let alpha = uniform(&mut rng, 20, 1.0);
    let pose = random_pose(&mut rng, 20.0);
    let obs = model
        .project(&model.synthesize(&alpha, &[0.0; 30]).unwrap(), &pose)
        .unwrap();
    let (n, _) = neutralize(&obs, &model, &exact_opts()).unwrap();
    assert!(n.rms_diff(&obs) < 1e-5);
}

#[test]
fn neutral_frame_found_in_fixture() {
    let (fx, seq) = fixture_sequence(3, 40);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let nf = select_neutral_frame(&seq, &fx.model, &FitOptions::default(), 5, exec).unwrap();
        assert_eq!(nf.index, fx.manifest.driving.neutral_index);
        assert!(fx.manifest.driving.betas[nf.index].iter().all(|&b| b == 0.0));
    }
    // stride larger than the sequence still finds it
    let nf = select_neutral_frame(&seq, &fx.model, &FitOptions::default(), 100, Execution::Sequential).unwrap();
    assert_eq!(nf.index, fx.manifest.driving.neutral_index);
}

#[test]
fn neutral_frame_rejects_empty_sequence() {
    let model = make_synthetic_model(8, 40, 2, 2).unwrap();
    let err = select_neutral_frame(&[], &model, &FitOptions::default(), 5, Execution::Sequential).unwrap_err();
    assert!(matches!(err, Error::EmptySequence));
}

#[test]
fn fixture_scales_match_manifest() {
    let (fx, seq) = fixture_sequence(4, 30);
    let reference =
        serde_json::from_slice::<LandmarkFile>(&fx.files.iter().find(|(n, _)| n == "reference.json").unwrap().1)
            .unwrap()
            .into_sets()
            .unwrap();
    let cfg = RetargetConfig::new(FeatureIndexConfig::preset("mp478").unwrap());
    let (rn, _) = neutralize(&reference[0], &fx.model, &exact_opts()).unwrap();
    let nf = select_neutral_frame(&seq, &fx.model, &exact_opts(), 5, Execution::Parallel).unwrap();
    let s = compute_scale_factors(&rn, &nf.neutral, &cfg).unwrap();
    let want = fx.manifest.expected_scale_factors;
    assert!((s.s_eye - want.s_eye).abs() < 1e-6, "{} vs {}", s.s_eye, want.s_eye);
    assert!((s.s_mouth - want.s_mouth).abs() < 1e-6);
}

#[test]
fn sequence_retarget_is_order_independent() {
    let (fx, seq) = fixture_sequence(6, 30);
    let cfg = RetargetConfig::new(FeatureIndexConfig::preset("mp478").unwrap());
    let n0 = fx.manifest.driving.neutral_index;
    let (rn, _) = neutralize(&seq[0], &fx.model, &FitOptions::default()).unwrap();
    let (dn, _) = neutralize(&seq[n0], &fx.model, &FitOptions::default()).unwrap();
    let s = compute_scale_factors(&rn, &dn, &cfg).unwrap();
    let a = retarget_sequence(&rn, &seq, &dn, &s, &cfg, Execution::Sequential).unwrap();
    let b = retarget_sequence(&rn, &seq, &dn, &s, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    let mut rev: Vec<LandmarkSet> = seq.iter().rev().cloned().collect();
    let c = retarget_sequence(&rn, &rev, &dn, &s, &cfg, Execution::Parallel).unwrap();
    rev = c.into_iter().rev().collect();
    assert_eq!(a, rev);
}

fn toy_cfg() -> RetargetConfig {
    let region = |t: usize| FeatureRegion {
        top: t,
        bottom: t + 1,
        indices: vec![t, t + 1],
    };
    RetargetConfig::new(FeatureIndexConfig {
        topology_id: "toy8".into(),
        eyes: vec![region(0), region(2)],
        mouth: region(4),
    })
}

fn points() -> impl Strategy<Value = LandmarkSet> {
    prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 8).prop_map(|mut p| {
        for f in 0..3 {
            p[2 * f + 1][1] = p[2 * f][1] + 0.2;
        }
        LandmarkSet::new("toy8", p).unwrap()
    })
}

proptest! {
    #[test]
    fn unit_scale_retarget_is_offset_transfer(rn in points(), dn in points(), df in points()) {
        let out = retarget(&rn, &df, &dn, &ScaleFactors::unit(2), &toy_cfg()).unwrap();
        for i in 0..8 {
            for c in 0..3 {
                prop_assert_eq!(out[i][c], rn[i][c] + (df[i][c] - dn[i][c]));
            }
        }
    }

    #[test]
    fn retarget_of_neutral_is_reference(rn in points(), dn in points(), se in 0.25f64..4.0, sm in 0.25f64..4.0) {
        let mut s = ScaleFactors::unit(2);
        s.s_eye = se;
        s.s_mouth = sm;
        let out = retarget(&rn, &dn, &dn, &s, &toy_cfg()).unwrap();
        prop_assert_eq!(out, rn);
    }

    #[test]
    fn swapping_arguments_inverts_ratios(a in points(), b in points()) {
        let cfg = toy_cfg();
        let ab = compute_scale_factors(&a, &b, &cfg).unwrap();
        let ba = compute_scale_factors(&b, &a, &cfg).unwrap();
        // apertures are all close to 0.2, so nothing clamps
        prop_assert!(!ab.clamped && !ba.clamped);
        prop_assert!((ab.s_mouth * ba.s_mouth - 1.0).abs() < 1e-12);
        for (x, y) in ab.s_eye_each.iter().zip(&ba.s_eye_each) {
            prop_assert!((x * y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_factors_stay_clamped(ra in 1e-5f64..10.0, da in 1e-5f64..10.0, p in points()) {
        let cfg = toy_cfg();
        let mut r = p.clone();
        let mut d = p;
        for f in 0..3 {
            r[2 * f + 1][1] = r[2 * f][1] + ra;
            d[2 * f + 1][1] = d[2 * f][1] + da;
        }
        let s = compute_scale_factors(&r, &d, &cfg).unwrap();
        prop_assert!((0.25..=4.0).contains(&s.s_eye) && (0.25..=4.0).contains(&s.s_mouth));
        let raw = ra / da;
        if (0.25..=4.0).contains(&raw) {
            prop_assert!((s.s_mouth - raw).abs() <= 1e-15 * raw);
        }
    }
}
