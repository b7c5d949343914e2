use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_fold, EpochRecord, TrainConfig};
use crate::dataset::FoldSplit;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, render_cv_table, AggregateMetrics, MetricsReport, SampleOutcome};
use crate::model::{ModelConfig, PreparedVideo};

/// Which epoch's weights a fold is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSelection {
    /// Best accuracy on the held-out fold, which doubles as the validation set.
    #[default]
    HeldOutFold,
    /// The weights after the last epoch; the held-out fold is never consulted
    /// during training.
    FinalEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repetition: usize,
    pub fold: usize,
    pub selected_epoch: usize,
    pub report: MetricsReport,
    pub samples: Vec<SampleOutcome>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub repetitions: usize,
    pub selection: CheckpointSelection,
    /// Ordered by repetition, then fold.
    pub folds: Vec<FoldResult>,
    /// Mean and population std over every fold of every repetition.
    pub aggregate: AggregateMetrics,
}

impl CvReport {
    pub fn fold_reports(&self) -> Vec<MetricsReport> {
        self.folds.iter().map(|f| f.report.clone()).collect()
    }

    pub fn render(&self, model_name: &str) -> String {
        render_cv_table(&[(model_name.to_string(), self.aggregate.clone())])
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// One k-fold cross-validation: for each fold, train on the other folds and
/// score the held-out fold.
pub fn run_cross_validation(
    videos: &[PreparedVideo],
    split: &FoldSplit,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<CvReport> {
    run_cross_validation_with(
        videos,
        std::slice::from_ref(split),
        model_config,
        train_config,
        CheckpointSelection::default(),
    )
}

/// Cross-validation repeated once per split (each usually drawn with its own
/// seed). Folds train in parallel; results do not depend on scheduling.
pub fn run_cross_validation_with(
    videos: &[PreparedVideo],
    splits: &[FoldSplit],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    selection: CheckpointSelection,
) -> Result<CvReport> {
    let first = splits
        .first()
        .ok_or_else(|| Error::InvalidArgument("cross-validation needs at least one split".into()))?;
    if splits.iter().any(|s| s.k != first.k) {
        return Err(Error::InvalidArgument("all repetitions must use the same k".into()));
    }
    let by_id: HashMap<&str, &PreparedVideo> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    let video_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    for split in splits {
        let split_ids: BTreeSet<&str> = split.assignments.keys().map(String::as_str).collect();
        if split_ids != video_ids {
            return Err(Error::Stratification(format!(
                "fold split (seed {}) does not cover exactly the {} loaded videos",
                split.seed,
                videos.len()
            )));
        }
    }

    let jobs: Vec<(usize, usize)> = (0..splits.len())
        .flat_map(|r| (0..first.k).map(move |f| (r, f)))
        .collect();
    let folds = jobs
        .par_iter()
        .map(|&(repetition, fold)| {
            let (train_ids, test_ids) = splits[repetition].train_test(fold);
            let train: Vec<PreparedVideo> = train_ids.iter().map(|id| by_id[id].clone()).collect();
            let test: Vec<PreparedVideo> = test_ids.iter().map(|id| by_id[id].clone()).collect();
            log::info!("repetition {repetition} fold {fold}: {} train / {} held out", train.len(), test.len());
            let val: &[PreparedVideo] = match selection {
                CheckpointSelection::HeldOutFold => &test,
                CheckpointSelection::FinalEpoch => &[],
            };
            let (checkpoint, epochs) = train_fold(&train, val, model_config, train_config)?;
            let evaluation = evaluate_model(&checkpoint.to_model()?, &test)?;
            Ok(FoldResult {
                repetition,
                fold,
                selected_epoch: checkpoint.epoch,
                report: evaluation.report,
                samples: evaluation.samples,
                epochs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricsReport> = folds.iter().map(|f| f.report.clone()).collect();
    Ok(CvReport {
        k: first.k,
        repetitions: splits.len(),
        selection,
        folds,
        aggregate: AggregateMetrics::from_reports(&reports),
    })
}
