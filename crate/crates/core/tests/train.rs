use avc_core::corruption::{CorruptionMode, CorruptionSpec};
use avc_core::model::{AvcModel, ModelConfig};
use avc_core::synth::{generate_scene, SceneSpec};
use avc_core::train::{
    adam_for, evaluate, history_to_csv, samples_from_scenes, train, train_step, EvalResult, Sample,
    TrainConfig, TrainError,
};
use avc_core::{SplitMix64, Tensor};

fn desk(seed: u64) -> ModelConfig {
    ModelConfig::parse(
        &format!("visual = 4,4,M,8,M,8,M,8\naudio = 4,M,8,M,8,M,8,M\nbackend = 8,8,8,6,4,4\nseed = {seed}"),
        "desk",
    )
    .unwrap()
}

fn samples(n: usize, first: u64) -> Vec<Sample<f64>> {
    let spec = SceneSpec {
        width: 32,
        height: 24,
        n_min: 0,
        n_max: 6,
        seed: 31,
        ..SceneSpec::default()
    };
    let scenes: Vec<_> = (first..first + n as u64)
        .map(|i| generate_scene::<f64>(&spec, i).unwrap())
        .collect();
    samples_from_scenes(&scenes, first).unwrap()
}

fn dark() -> CorruptionSpec {
    CorruptionSpec::new(
        CorruptionMode::DarkenNoise {
            rate: 0.5,
            b: 20.0,
            deterministic: true,
        },
        4,
    )
    .unwrap()
}

#[test]
fn metrics_by_hand() {
    let r = EvalResult::from_pairs(vec![(3.0, 4.0), (7.0, 5.0)]).unwrap();
    assert!((r.mae - 1.5).abs() < 1e-15);
    assert!((r.mse - 2.5f64.sqrt()).abs() < 1e-15);
    let perfect = EvalResult::from_pairs(vec![(2.0, 2.0), (9.0, 9.0)]).unwrap();
    assert_eq!((perfect.mae, perfect.mse), (0.0, 0.0));
    assert!(matches!(
        EvalResult::from_pairs(vec![]),
        Err(TrainError::Input(_))
    ));
}

#[test]
fn constant_predictor_scores_mean_absolute_deviation() {
    let mut rng = SplitMix64::new(8);
    let counts: Vec<f64> = (0..57).map(|_| rng.uniform(0.0, 40.0).floor()).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let r = EvalResult::from_pairs(counts.iter().map(|&c| (c, mean)).collect()).unwrap();
    // deviations about the mean sum to zero, so Σ|d| = 2·Σ max(d, 0)
    let positive: f64 = counts.iter().map(|c| (c - mean).max(0.0)).sum();
    let mad = 2.0 * positive / counts.len() as f64;
    assert!((r.mae - mad).abs() < 1e-12, "{} vs {}", r.mae, mad);
}

#[test]
fn rms_error_dominates_mean_error() {
    let mut rng = SplitMix64::new(9);
    for _ in 0..1000 {
        let n = 1 + (rng.uniform(0.0, 30.0) as usize);
        let pairs = (0..n)
            .map(|_| (rng.uniform(0.0, 100.0), rng.uniform(-5.0, 120.0)))
            .collect();
        let r = EvalResult::from_pairs(pairs).unwrap();
        assert!(
            r.mae >= 0.0 && r.mse >= r.mae * (1.0 - 1e-12),
            "{} < {}",
            r.mse,
            r.mae
        );
    }
}

#[test]
fn evaluation_csv_has_rows_and_summary() {
    let r = EvalResult::from_pairs(vec![(3.0, 4.0), (7.0, 5.0)]).unwrap();
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sample,gt_count,pred_count");
    assert_eq!(lines[1], "0,3,4");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("# mae=1.5,mse=1.58113"));
}

#[test]
fn empty_sets_are_rejected() {
    let m = AvcModel::<f64>::new(desk(1)).unwrap();
    assert!(matches!(evaluate(&m, &[], None), Err(TrainError::Input(_))));
    let s = samples(2, 0);
    let cfg = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train(m.clone(), &[], &s, &cfg),
        Err(TrainError::Input(_))
    ));
    assert!(matches!(train(m, &s, &[], &cfg), Err(TrainError::Input(_))));
}

#[test]
fn learning_rate_decays_each_epoch() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_at(0), 1e-5);
    assert!((cfg.lr_at(1) - 9.9e-6).abs() < 1e-20);
    let s = samples(3, 0);
    let out = train(
        AvcModel::<f64>::new(desk(2)).unwrap(),
        &s,
        &s,
        &TrainConfig {
            max_epochs: 3,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(out.history.len(), 3);
    assert_eq!(out.history[0].lr, 1e-5);
    assert!((out.history[1].lr - 9.9e-6).abs() < 1e-20);
    assert!((out.history[2].lr - 9.801e-6).abs() < 1e-20);
}

#[test]
fn single_sample_loss_falls_for_twenty_steps() {
    let s = samples(4, 0).into_iter().find(|s| s.count >= 3.0).unwrap();
    let img = s.image.to_chw();
    let mut m = AvcModel::<f64>::new(desk(3)).unwrap();
    let cfg = TrainConfig {
        lr: 1e-4,
        ..TrainConfig::default()
    };
    let mut adam = adam_for(&m, &cfg);
    let mut losses = Vec::new();
    for _ in 0..21 {
        losses.push(train_step(&mut m, &mut adam, &[(&img, &s)]).unwrap());
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "loss rose: {:?}", losses);
    }
}

#[test]
fn tiny_steps_descend() {
    let batch = samples(4, 100);
    let imgs: Vec<Tensor<f64>> = batch.iter().map(|s| s.image.to_chw()).collect();
    let pairs: Vec<_> = imgs.iter().zip(&batch).collect();
    let cfg = TrainConfig {
        lr: 1e-7,
        // the penalty would change the objective being descended
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    for seed in 0..10 {
        let mut m = AvcModel::<f64>::new(desk(seed)).unwrap();
        m.randomize_film_weights(seed, 0.05);
        let mut adam = adam_for(&m, &cfg);
        let before = train_step(&mut m, &mut adam, &pairs).unwrap();
        let mut probe = m.clone();
        let mut probe_adam = adam_for(&probe, &cfg);
        let after = train_step(&mut probe, &mut probe_adam, &pairs).unwrap();
        assert!(after <= before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let tr = samples(6, 0);
    let va = samples(3, 50);
    let cfg = TrainConfig {
        lr: 1e-3,
        max_epochs: 3,
        batch_size: 4,
        seed: 17,
        corruption: Some(dark()),
        ..TrainConfig::default()
    };
    let run = || {
        train(
            AvcModel::<f32>::new(desk(4)).unwrap(),
            &cast(&tr),
            &cast(&va),
            &cfg,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.best.checkpoint_bytes(), b.best.checkpoint_bytes());
    assert_eq!(history_to_csv(&a.history), history_to_csv(&b.history));
    let other = train(
        AvcModel::<f32>::new(desk(4)).unwrap(),
        &cast(&tr),
        &cast(&va),
        &TrainConfig { seed: 18, ..cfg },
    )
    .unwrap();
    assert_ne!(history_to_csv(&a.history), history_to_csv(&other.history));
}

fn cast(s: &[Sample<f64>]) -> Vec<Sample<f32>> {
    s.iter()
        .map(|s| Sample {
            index: s.index,
            image: s.image.cast(),
            audio: s.audio.cast(),
            target: s.target.cast(),
            count: s.count,
        })
        .collect()
}

#[test]
fn saved_best_checkpoint_reproduces_its_score() {
    let tr = samples(5, 0);
    let va = samples(4, 70);
    let cfg = TrainConfig {
        lr: 3e-3,
        max_epochs: 4,
        corruption: Some(dark()),
        ..TrainConfig::default()
    };
    let out = train(AvcModel::<f64>::new(desk(5)).unwrap(), &tr, &va, &cfg).unwrap();
    assert_eq!(out.history.len(), 4);
    let best_record = out.history[out.best_epoch - 1];
    assert_eq!(best_record.val_mae, out.best_val_mae);
    assert!(out.history.iter().all(|r| r.val_mae >= out.best_val_mae));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.avck");
    out.best.save(&path).unwrap();
    let back = AvcModel::<f64>::load(desk(5), &path).unwrap();
    let again = evaluate(&back, &va, cfg.corruption.as_ref()).unwrap();
    // checkpoints store f32, so an f64 model comes back rounded
    assert!((again.mae - out.best_val_mae).abs() < 1e-6 * out.best_val_mae.max(1.0));

    let csv = history_to_csv(&out.history);
    assert!(csv.starts_with("epoch,lr,train_loss,val_mae,val_mse\n1,0.003,"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let mut s = samples(2, 0);
    let dims = s[1].target.dims().to_vec();
    s[1].target = Tensor::full(&dims, f64::NAN);
    let cfg = TrainConfig {
        max_epochs: 2,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let err = train(AvcModel::<f64>::new(desk(6)).unwrap(), &s, &s[..1], &cfg).unwrap_err();
    match &err {
        TrainError::Diverged {
            epoch, grad_norms, ..
        } => {
            assert_eq!(*epoch, 1);
            assert!(grad_norms.iter().any(|(n, _)| n == "head.weight"));
        }
        other => panic!("unexpected {other}"),
    }
    assert!(err.to_string().contains("epoch 1"));
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            lr_decay: 1.5,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            weight_decay: -1.0,
            ..TrainConfig::default()
        },
    ] {
        assert!(
            matches!(cfg.validate(), Err(TrainError::Config(_))),
            "{cfg}"
        );
    }
    assert!(TrainConfig::default().validate().is_ok());
}
