//! Training loop and cross-validation contracts on a tiny synthetic set.

use echomil::dataset::{generate_synthetic_dataset, load_all, make_fold_splits, DatasetManifest, SyntheticSpec};
use echomil::model::{ModelConfig, PreparedVideo};
use echomil::training::{
    prepare_videos, run_cross_validation, run_cross_validation_with, train_fold, CheckpointSelection, TrainConfig,
};
use echomil::Error;

fn tiny_model() -> ModelConfig {
    ModelConfig {
        num_frames: 4,
        input_size: 8,
        spatial_feature_dim: 8,
        attention_hidden_dim: 8,
        temporal_feature_dim: 8,
        ..ModelConfig::toy()
    }
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::toy()
    }
}

fn dataset(dir: &std::path::Path, per_class: usize) -> (DatasetManifest, Vec<PreparedVideo>) {
    let spec = SyntheticSpec {
        num_positive: per_class,
        num_negative: per_class,
        frames_per_video: 12,
        frame_size: 16,
        event_window: (3, 6),
        ..SyntheticSpec::default()
    };
    let (manifest, _) = generate_synthetic_dataset(&spec, dir).unwrap();
    let videos = prepare_videos(&load_all(&manifest).unwrap(), &tiny_model()).unwrap();
    (manifest, videos)
}

#[test]
fn same_seed_same_records() {
    let dir = tempfile::tempdir().unwrap();
    let (_, videos) = dataset(dir.path(), 3);
    let (train, val) = videos.split_at(4);
    let (a, ra) = train_fold(train, val, &tiny_model(), &tiny_train(3)).unwrap();
    let (b, rb) = train_fold(train, val, &tiny_model(), &tiny_train(3)).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.epoch, b.epoch);
    for ((_, x), (_, y)) in a.params.iter().zip(b.params.iter()) {
        assert_eq!(x, y);
    }
    assert_eq!(ra.len(), 3);
    for r in &ra {
        assert!(r.train_loss >= 0.0 && (0.0..=1.0).contains(&r.train_accuracy));
        assert!(r.val_metrics.is_some());
    }
    let other = TrainConfig {
        seed: 1,
        ..tiny_train(3)
    };
    let (_, rc) = train_fold(train, val, &tiny_model(), &other).unwrap();
    assert_ne!(ra, rc);
}

#[test]
fn overlapping_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, videos) = dataset(dir.path(), 2);
    let err = train_fold(&videos, &videos[1..2], &tiny_model(), &tiny_train(1)).unwrap_err();
    match err {
        Error::Leakage { count, first } => {
            assert_eq!(count, 1);
            assert_eq!(first, videos[1].id);
        }
        other => panic!("expected a leakage error, got {other}"),
    }
}

#[test]
fn invalid_train_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, videos) = dataset(dir.path(), 2);
    let bad = TrainConfig {
        learning_rate: -1.0,
        ..tiny_train(1)
    };
    assert!(matches!(train_fold(&videos, &[], &tiny_model(), &bad), Err(Error::Config(_))));
}

#[test]
fn without_validation_the_last_epoch_is_kept() {
    let dir = tempfile::tempdir().unwrap();
    let (_, videos) = dataset(dir.path(), 2);
    let (checkpoint, records) = train_fold(&videos, &[], &tiny_model(), &tiny_train(2)).unwrap();
    assert_eq!(checkpoint.epoch, 2);
    assert!(records.iter().all(|r| r.val_metrics.is_none()));
    assert!(checkpoint.train_config.is_some());
}

#[test]
fn cross_validation_reports_every_fold() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, videos) = dataset(dir.path(), 3);
    let split = make_fold_splits(&manifest, 3, 0).unwrap();
    let report = run_cross_validation(&videos, &split, &tiny_model(), &tiny_train(1)).unwrap();
    assert_eq!(report.folds.len(), 3);
    assert_eq!(report.aggregate.folds, 3);
    let mut seen: Vec<&str> = report.folds.iter().flat_map(|f| f.samples.iter().map(|s| s.id.as_str())).collect();
    seen.sort_unstable();
    let mut all: Vec<&str> = videos.iter().map(|v| v.id.as_str()).collect();
    all.sort_unstable();
    assert_eq!(seen, all, "every video is held out exactly once");
    assert!(report.render("toy").contains("AUC(%)"));

    let again = run_cross_validation(&videos, &split, &tiny_model(), &tiny_train(1)).unwrap();
    assert_eq!(report, again);

    let json = dir.path().join("cv.json");
    report.write_json(&json).unwrap();
    let back: echomil::training::CvReport = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn repeated_cross_validation_pools_folds() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, videos) = dataset(dir.path(), 2);
    let splits = [make_fold_splits(&manifest, 2, 0).unwrap(), make_fold_splits(&manifest, 2, 1).unwrap()];
    let report =
        run_cross_validation_with(&videos, &splits, &tiny_model(), &tiny_train(1), CheckpointSelection::FinalEpoch)
            .unwrap();
    assert_eq!((report.repetitions, report.folds.len(), report.aggregate.folds), (2, 4, 4));
    assert!(report.folds.iter().all(|f| f.selected_epoch == 1));
}

#[test]
fn split_must_match_videos() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, videos) = dataset(dir.path(), 2);
    let split = make_fold_splits(&manifest, 2, 0).unwrap();
    let err = run_cross_validation(&videos[1..], &split, &tiny_model(), &tiny_train(1)).unwrap_err();
    assert!(matches!(err, Error::Stratification(_)));
}
