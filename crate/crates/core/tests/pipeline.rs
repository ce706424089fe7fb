use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flexact::activations::{baseline_eval, eval, ActivationKind};
use flexact::data::{load_idx_images, load_returns_csv, synth_images, write_idx_images};
use flexact::experiment::{run_trial, DataSourceKind};
use flexact::nn::{Model, ModelSpec, Network, ParamRole, Parameterized};
use flexact::train::batch_gradient;
use flexact::{Error, ExperimentConfig, Optimizer, OptimConfig, RegConfig, Tensor};

#[test]
fn idx_round_trip_quantizes_to_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("img.idx");
    let images = synth_images(4, 28, 28, &mut ChaCha8Rng::seed_from_u64(1));
    write_idx_images(&path, &images).unwrap();
    let back = load_idx_images(&path).unwrap();
    assert_eq!(back.len(), images.len());
    for (a, b) in back.data().iter().zip(images.data()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
    }
}

#[test]
fn truncated_idx_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.idx");
    let images = synth_images(2, 8, 8, &mut ChaCha8Rng::seed_from_u64(1));
    write_idx_images(&path, &images).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_idx_images(&path).is_err());
}

#[test]
fn csv_parse_error_names_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, "a,b\n0.1,0.2\n0.3,x\n").unwrap();
    let msg = load_returns_csv(&path).unwrap_err().to_string();
    assert!(msg.contains('3') && msg.contains('2'), "{msg}");
}

#[test]
fn config_json_round_trip() {
    let mut cfg = ExperimentConfig::new(ModelSpec::cae1(ActivationKind::PE2Relu));
    cfg.data.source = DataSourceKind::Idx;
    cfg.data.path = Some("x.idx".into());
    let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn unknown_config_field_is_rejected() {
    let text = r#"{"model":{"kind":"stacked_lstm","layer_sizes":[7,10]},"epoch":3}"#;
    assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_)) | Err(Error::Json(_))));
}

#[test]
fn single_trial_with_error_bars_is_rejected() {
    let mut cfg = ExperimentConfig::new(ModelSpec::lstm(&[7, 10], ActivationKind::Sigmoid));
    cfg.n_trials = 1;
    assert!(cfg.validate().is_err());
    cfg.error_bars = false;
    assert!(cfg.validate().is_ok());
}

#[test]
fn short_trial_is_reproducible() {
    let mut cfg = ExperimentConfig::new(ModelSpec::lstm(&[3, 4], ActivationKind::PSigRamp));
    cfg.data.synth.d = 3;
    cfg.data.synth.t = 200;
    cfg.epochs = 2;
    let a = run_trial(&cfg, 7).unwrap();
    let b = run_trial(&cfg, 7).unwrap();
    assert_eq!(a.train_mse, b.train_mse);
    assert_eq!(a.activation_params, b.activation_params);
    assert_eq!(a.train_mse.len(), 2);
}

#[test]
fn optimizer_step_lowers_the_batch_loss() {
    let spec = ModelSpec::lstm(&[3, 4], ActivationKind::PSigRamp);
    let mut model = Model::init(&spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let x = Tensor::new(vec![5, 3], (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let y = Tensor::vector(vec![0.2, -0.1, 0.4]);
    let reg = RegConfig::default();
    let (before, grads) = batch_gradient(&model, &[&x], &[&y], &reg).unwrap();
    let config = OptimConfig {
        lr: 1e-2,
        ..OptimConfig::default()
    };
    let mut opt = Optimizer::new(config, &model).unwrap();
    opt.step(&mut model, &grads).unwrap();
    let (after, _) = batch_gradient(&model, &[&x], &[&y], &reg).unwrap();
    assert!(after.total < before.total);
    assert_eq!(model.count(ParamRole::ACTIVATION), 2 * 3 * 4);
}

#[test]
fn wrong_input_width_is_an_error() {
    let model = Model::init(&ModelSpec::lstm(&[3, 4], ActivationKind::Sigmoid), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(model.forward(&Tensor::zeros(&[5, 2])).is_err());
}

proptest! {
    #[test]
    fn baselines_collapse_exactly(z in -20.0f64..20.0) {
        for kind in ActivationKind::FLEXIBLE {
            if let Some((fixed, p)) = kind.baseline_point() {
                prop_assert_eq!(eval(kind, z, &p), baseline_eval(fixed, z).unwrap());
            }
        }
    }

    #[test]
    fn sig_ramp_stays_in_unit_interval(z in -50.0f64..50.0, a in 0.0f64..1.0, b in 1e-4f64..5.0) {
        let y = eval(ActivationKind::PSigRamp, z, &[a, b]);
        prop_assert!((0.0..=1.0).contains(&y));
    }

    #[test]
    fn pe2_relu_is_monotone(z in -10.0f64..10.0, dz in 1e-3f64..1.0, a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let k = ActivationKind::PE2Relu;
        prop_assert!(eval(k, z + dz, &[a, b]) >= eval(k, z, &[a, b]));
    }
}
