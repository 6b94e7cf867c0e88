use hsp_core::diffusion::{
    forward_diffuse, id_loss, id_loss_terms, ldm_loss, make_linear_schedule, predict_z0, DownsampledGrayEmbedding,
    EmbeddingFn, LatentTensor, NoiseSchedule,
};
use hsp_core::masks::Mask;
use hsp_core::Error;
use proptest::prelude::*;

fn tensor(n: usize) -> impl Strategy<Value = LatentTensor> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |v| LatentTensor::new(vec![n], v).unwrap())
}

struct Constant(Vec<f64>);

impl EmbeddingFn for Constant {
    fn embed(&self, _: &LatentTensor) -> hsp_core::Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

proptest! {
    #[test]
    fn inversion_round_trips(z0 in tensor(32), eps in tensor(32), t in 1usize..=1000) {
        let sched = NoiseSchedule::default();
        let zt = forward_diffuse(&z0, &eps, t, &sched).unwrap();
        let back = predict_z0(&zt, &eps, t, &sched).unwrap();
        for (a, b) in back.values().iter().zip(z0.values()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ldm_loss_is_symmetric_and_zero_on_equal(a in tensor(16), b in tensor(16)) {
        prop_assert_eq!(ldm_loss(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(ldm_loss(&a, &b).unwrap(), ldm_loss(&b, &a).unwrap());
        prop_assert!(ldm_loss(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn tensor_binary_round_trip(a in tensor(7)) {
        prop_assert_eq!(LatentTensor::from_bytes(&a.to_bytes()).unwrap(), a);
    }
}

#[test]
fn schedule_is_monotone_and_bounded() {
    let s = make_linear_schedule(1000, 1e-4, 0.02).unwrap();
    assert_eq!(s, NoiseSchedule::default());
    let ab = s.alpha_bar();
    assert!(ab.windows(2).all(|w| w[1] < w[0]));
    assert!(ab[0] < 1.0 && *ab.last().unwrap() > 0.0);
    assert!(s.alpha_bar_at(0).is_err() && s.alpha_bar_at(1001).is_err());
    assert!(NoiseSchedule::from_betas(vec![0.1, 1.0]).is_err());
}

#[test]
fn shape_mismatch_rejected() {
    let a = LatentTensor::new(vec![2, 2], vec![0.0; 4]).unwrap();
    let b = LatentTensor::new(vec![4], vec![0.0; 4]).unwrap();
    assert!(matches!(ldm_loss(&a, &b), Err(Error::DimensionMismatch(_))));
}

#[test]
fn id_loss_terms_match_hand_computation() {
    // 2x2 single-channel image, mask selects the diagonal
    let x = LatentTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = LatentTensor::new(vec![2, 2], vec![0.0, 2.0, 3.0, 2.0]).unwrap();
    let m = Mask::from_bits(2, 2, vec![true, false, false, true]).unwrap();
    let e = Constant(vec![0.6, 0.8]);
    let t = id_loss_terms(&x, &y, &m, &e).unwrap();
    assert_eq!(t.pixel, (1.0 + 4.0) / 2.0);
    assert!(t.cosine.abs() < 1e-15);
    assert_eq!(id_loss(&x, &y, &m, &e).unwrap(), t.total());
}

#[test]
fn non_unit_embeddings_rejected() {
    let x = LatentTensor::new(vec![2, 2], vec![0.0; 4]).unwrap();
    let m = Mask::ones(2, 2);
    assert!(id_loss(&x, &x, &m, &Constant(vec![1.0, 1.0])).is_err());
}

#[test]
fn stub_embedding_is_unit_norm_and_deterministic() {
    let img = LatentTensor::from_fn(vec![40, 30, 3], |i| (i % 17) as f64 / 17.0).unwrap();
    let e = DownsampledGrayEmbedding::default();
    let v = e.embed(&img).unwrap();
    assert_eq!(v.len(), 256);
    assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
    assert_eq!(v, e.embed(&img).unwrap());
    let dark = LatentTensor::new(vec![4, 4], vec![0.0; 16]).unwrap();
    let z = e.embed(&dark).unwrap();
    assert_eq!(z[0], 1.0);
}
