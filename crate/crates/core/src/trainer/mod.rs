//! Desk-scale classifier training with hard or soft cross-entropy targets.
//!
//! Models are a softmax-linear classifier or a one-hidden-layer tanh MLP over
//! flattened grayscale pixels, trained with mini-batch Adam and per-sample
//! affine augmentation.

mod augment;
mod model;
mod raster;
mod split;
mod train;

use thiserror::Error;

pub use augment::{apply_affine, augment, AffineParams, AugmentConfig};
pub use model::{
    cross_entropy, grad_check, logit_gradient, softmax, Architecture, Dense, ForwardCache, LayerDocument,
    ModelDocument, ModelParams, GRAD_CHECK_STEP, LOG_CLAMP, MODEL_FORMAT,
};
pub use raster::Raster;
pub use split::split_by_subject;
pub use train::{
    initial_model, train, train_from, train_with_report, AdamConfig, LabelMode, TrainConfig, TrainReport,
    TrainSample,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("soft-target training needs non-empty vote counts")]
    EmptyCounts,
    #[error("held-out subject {0:?} has no items")]
    UnknownSubject(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::label_model::{EmotionClass, ItemRecord, LabelCountVector, Manifest, SoftTarget};

    fn random_simplex(rng: &mut impl Rng) -> SoftTarget<f64> {
        let raw: [f64; 7] = std::array::from_fn(|_| rng.random::<f64>() + 1e-3);
        let s: f64 = raw.iter().sum();
        SoftTarget::new(raw.map(|x| x / s)).unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        let p = SoftTarget::<f64>::one_hot(EmotionClass::Sad);
        let mut q = [0.5 / 6.0; 7];
        q[EmotionClass::Sad.ordinal()] = 0.5;
        let q = SoftTarget::new(q).unwrap();
        assert!((cross_entropy(&p, &q) - std::f64::consts::LN_2).abs() < 1e-15);
        let u = SoftTarget::<f64>::uniform();
        assert!((cross_entropy(&u, &u) - 7f64.ln()).abs() < 1e-14);
        // zero prediction on the target class is clamped, not infinite
        let hard = SoftTarget::<f64>::one_hot(EmotionClass::Anger);
        let wrong = SoftTarget::<f64>::one_hot(EmotionClass::Happy);
        assert!((cross_entropy(&hard, &wrong) - (-(LOG_CLAMP.ln()))).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_matches_term_by_term_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = random_simplex(&mut rng);
            let q = random_simplex(&mut rng);
            let mut oracle = 0.0;
            for i in 0..7 {
                oracle -= p.probs()[i] * q.probs()[i].ln();
            }
            let got = cross_entropy(&p, &q);
            assert!((got - oracle).abs() <= 1e-12 * oracle.abs(), "{got} vs {oracle}");
        }
    }

    #[test]
    fn softmax_examples_and_oracle() {
        assert_eq!(softmax(&[0.0f64; 7]), SoftTarget::uniform());
        for c in [-50.0f64, 3.0, 700.0] {
            let s = softmax(&[c; 7]);
            assert!(s.probs().iter().all(|p| (p - 1.0 / 7.0).abs() < 1e-15));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let z: [f64; 7] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            let s = softmax(&z);
            for i in 0..7 {
                let oracle = z[i].exp() / denom;
                assert!((s.probs()[i] - oracle).abs() <= 1e-12 * oracle);
            }
        }
    }

    #[test]
    fn logit_gradient_is_q_minus_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_simplex(&mut rng);
            let z: [f64; 7] = std::array::from_fn(|_| rng.random_range(-4.0..4.0));
            let q = softmax(&z);
            // chain rule through the softmax Jacobian: dL/dz_j = sum_i (-p_i / q_i) q_i (delta_ij - q_j)
            let g = logit_gradient(&p, &q);
            for j in 0..7 {
                let mut chain = 0.0;
                for i in 0..7 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    chain += (-p.probs()[i] / q.probs()[i]) * q.probs()[i] * (delta - q.probs()[j]);
                }
                assert!((g[j] - chain).abs() < 1e-10);
            }
        }
    }

    fn blob(w: usize, h: usize, sigma: f64) -> Raster<f64> {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let px = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Raster::new(w, h, px).unwrap()
    }

    #[test]
    fn zero_augmentation_is_bit_exact_identity() {
        let img = blob(24, 24, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(augment(&img, &AugmentConfig::identity(), &mut rng), img);
        }
    }

    #[test]
    fn constant_image_interior_is_preserved() {
        let img = Raster::filled(24, 24, 0.6f64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AugmentConfig { brightness_range: (1.0, 1.0), ..AugmentConfig::default() };
        for _ in 0..20 {
            let out = augment(&img, &cfg, &mut rng);
            assert_eq!(out.dims(), (24, 24));
            for y in 6..18 {
                for x in 6..18 {
                    assert!((out.get(x, y) - 0.6).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rotation_round_trip_loss_is_small() {
        let img = blob(24, 24, 4.0);
        for deg in [3.0, 7.0] {
            let fwd = apply_affine(&img, &AffineParams { rotation_deg: deg, ..AffineParams::identity() });
            let back = apply_affine(&fwd, &AffineParams { rotation_deg: -deg, ..AffineParams::identity() });
            let mad = back.mean_abs_diff(&img);
            assert!(mad < 0.02, "{deg} deg: {mad}");
        }
    }

    #[test]
    fn flip_and_brightness() {
        let img = Raster::new(3, 1, vec![0.1f64, 0.5, 0.9]).unwrap();
        let out = apply_affine(&img, &AffineParams { flip: true, brightness: 1.5, ..AffineParams::identity() });
        assert_eq!(out.pixels()[0], 1.0);
        assert!((out.pixels()[1] - 0.75).abs() < 1e-15);
        assert!((out.pixels()[2] - 0.15).abs() < 1e-15);
    }

    fn item(id: &str, subject: &str) -> ItemRecord {
        ItemRecord {
            item_id: id.into(),
            subject_id: subject.into(),
            posed_emotion: EmotionClass::Happy,
            image_path: format!("{id}.pgm"),
        }
    }

    #[test]
    fn split_examples() {
        let m = Manifest::new(vec![item("a", "s1"), item("b", "s1"), item("c", "s2")]).unwrap();
        let (train, test) = split_by_subject(&m, &BTreeSet::new()).unwrap();
        assert_eq!((train.len(), test.len()), (3, 0));
        let held: BTreeSet<String> = ["s2".to_string()].into();
        let (train, test) = split_by_subject(&m, &held).unwrap();
        assert_eq!(test.items()[0].item_id, "c");
        assert_eq!(train.len(), 2);
        let all: BTreeSet<String> = ["s1".to_string(), "s2".to_string()].into();
        assert!(split_by_subject(&m, &all).unwrap().0.is_empty());
        let unknown: BTreeSet<String> = ["s9".to_string()].into();
        assert!(matches!(split_by_subject(&m, &unknown), Err(TrainError::UnknownSubject(_))));
    }

    #[test]
    fn predict_proba_examples() {
        let img = blob(6, 6, 2.0);
        let model = ModelParams::<f64>::zeros(Architecture::SoftmaxLinear, 36);
        assert_eq!(model.predict_proba(&img).unwrap(), SoftTarget::uniform());
        let mut biased = model.clone();
        biased.layers_mut()[0].biases[EmotionClass::Fear.ordinal()] = 10.0;
        assert!(biased.predict_proba(&img).unwrap().get(EmotionClass::Fear) > 0.999);
        assert!(matches!(
            model.predict_proba(&blob(5, 5, 2.0)),
            Err(TrainError::DimensionMismatch { expected: 36, got: 25 })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for arch in [Architecture::SoftmaxLinear, Architecture::Mlp1Hidden { hidden_units: 16 }] {
            for _ in 0..5 {
                let model = ModelParams::<f64>::init(arch, 64, &mut rng);
                let x: Vec<f64> = (0..64).map(|_| rng.random()).collect();
                let p = random_simplex(&mut rng);
                let err = grad_check(&model, &x, &p).unwrap();
                assert!(err < 1e-4, "{arch:?}: {err}");
            }
        }
    }

    fn sample(img: &Raster<f64>, counts: [u32; 7], posed: EmotionClass) -> TrainSample<f64> {
        TrainSample { raster: img.clone(), counts: LabelCountVector::new(counts), posed }
    }

    fn quick_cfg(mode: LabelMode, epochs: usize) -> TrainConfig {
        TrainConfig {
            label_mode: mode,
            epochs,
            learning_rate: 0.05,
            augmentation: AugmentConfig::identity(),
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_sample_is_memorized() {
        let img = blob(8, 8, 2.0);
        let data = vec![sample(&img, [0; 7], EmotionClass::Surprised)];
        let model = train(&data, &quick_cfg(LabelMode::Hard, 400)).unwrap();
        assert!(model.predict_proba(&img).unwrap().get(EmotionClass::Surprised) > 0.99);
    }

    #[test]
    fn soft_training_converges_to_shared_target() {
        let img = blob(8, 8, 2.0);
        let counts = [30, 37, 15, 8, 0, 8, 2];
        let data: Vec<_> = (0..8).map(|_| sample(&img, counts, EmotionClass::Anger)).collect();
        let model = train(&data, &quick_cfg(LabelMode::Soft, 300)).unwrap();
        let q = model.predict_proba(&img).unwrap();
        let t = [0.30, 0.37, 0.15, 0.08, 0.0, 0.08, 0.02];
        let l1: f64 = q.probs().iter().zip(t).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 0.05, "{q:?}");
    }

    #[test]
    fn training_is_deterministic_and_streams_ignore_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<_> = (0..20)
            .map(|i| {
                let px = (0..36).map(|_| rng.random::<f64>()).collect();
                let posed = EmotionClass::ALL[i % 7];
                TrainSample { raster: Raster::new(6, 6, px).unwrap(), counts: LabelCountVector::one_hot(posed, 3), posed }
            })
            .collect();
        let cfg = TrainConfig { epochs: 3, seed: 4, ..TrainConfig::default() };
        let a = train_with_report(&data, &cfg).unwrap();
        let b = train_with_report(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        let hard = train_with_report(&data, &TrainConfig { label_mode: LabelMode::Hard, ..cfg.clone() }).unwrap();
        assert_eq!(hard.augmentation_digest, a.augmentation_digest);
    }

    #[test]
    fn train_errors() {
        let cfg = TrainConfig::default();
        assert!(matches!(train::<f64>(&[], &cfg), Err(TrainError::EmptyDataset)));
        let data = vec![
            sample(&blob(4, 4, 1.0), [1; 7], EmotionClass::Anger),
            sample(&blob(5, 5, 1.0), [1; 7], EmotionClass::Anger),
        ];
        assert!(matches!(train(&data, &cfg), Err(TrainError::DimensionMismatch { .. })));
        let empty = vec![sample(&blob(4, 4, 1.0), [0; 7], EmotionClass::Anger)];
        assert!(matches!(train(&empty, &cfg), Err(TrainError::EmptyCounts)));
        assert!(train(&empty, &TrainConfig { label_mode: LabelMode::Hard, epochs: 1, ..cfg.clone() }).is_ok());
        assert!(matches!(train(&empty, &TrainConfig { epochs: 0, ..cfg }), Err(TrainError::InvalidConfig(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = ModelParams::<f64>::init(Architecture::Mlp1Hidden { hidden_units: 3 }, 4, &mut rng);
        let json = model.to_json();
        assert!(json.contains("\"format\": 1"));
        assert!(json.contains("\"kind\": \"mlp_1hidden\""));
        assert_eq!(ModelParams::<f64>::from_json(&json).unwrap(), model);
        assert!(ModelParams::<f64>::from_json(&json.replace("\"format\": 1", "\"format\": 2")).is_err());
        let mut doc = model.to_document();
        doc.layers[0].biases.pop();
        assert!(ModelParams::<f64>::from_document(&doc).is_err());
    }

    #[test]
    fn pgm_round_trip_quantizes_to_8_bits() {
        let img = blob(7, 5, 2.0);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n7 5\n255\n"));
        let back = Raster::<f64>::read_pgm(&buf[..]).unwrap();
        assert_eq!(back.dims(), (7, 5));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let commented = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        assert_eq!(Raster::<f64>::read_pgm(&commented[..]).unwrap().pixels(), &[0.0, 1.0]);
        assert!(Raster::<f64>::read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let img = Raster::<f32>::filled(4, 4, 0.5);
        let model = ModelParams::<f32>::zeros(Architecture::SoftmaxLinear, 16);
        let q = model.predict_proba(&img).unwrap();
        assert!((q.probs().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn gibbs_inequality(a in proptest::array::uniform7(0.001f64..1.0), b in proptest::array::uniform7(0.001f64..1.0)) {
            let norm = |v: [f64; 7]| { let s: f64 = v.iter().sum(); SoftTarget::new(v.map(|x| x / s)).unwrap() };
            let (p, q) = (norm(a), norm(b));
            prop_assert!(cross_entropy(&p, &q) >= cross_entropy(&p, &p) - 1e-12);
        }

        #[test]
        fn softmax_shift_invariance(z in proptest::array::uniform7(-20.0f64..20.0), c in -100.0f64..100.0) {
            let a = softmax(&z);
            let b = softmax(&z.map(|v| v + c));
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn predictions_are_distributions(seed in 0u64..1000, hidden in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let arch = if seed % 2 == 0 { Architecture::SoftmaxLinear } else { Architecture::Mlp1Hidden { hidden_units: hidden } };
            let mut model = ModelParams::<f64>::init(arch, 9, &mut rng);
            model.params_mut().for_each(|p| *p *= 10.0);
            let img = Raster::new(3, 3, (0..9).map(|_| rng.random()).collect()).unwrap();
            let q = model.predict_proba(&img).unwrap();
            prop_assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
