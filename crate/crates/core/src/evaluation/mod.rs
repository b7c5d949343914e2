//! Metrics, model evaluation, report tables and the ablation grid.

mod ablation;
mod metrics;
mod report;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::model::{PreparedVideo, Prediction, VideoClassifier};

pub use ablation::{run_ablation_grid, AblationReport, AblationRow};
pub use metrics::{auc, confusion_matrix, derive_metrics, ConfusionMatrix, MetricsReport};
pub use report::{
    render_cv_table, render_percent, render_table, render_test_table, AggregateMetrics, MetricSummary, CV_COLUMNS,
    UNDEFINED,
};

/// One scored video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub truth: Label,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Sorted by sample id.
    pub samples: Vec<SampleOutcome>,
}

/// Metrics from final labels and final scores. AUC stays undefined when the
/// outcomes hold a single class.
pub fn metrics_from_outcomes(outcomes: &[SampleOutcome]) -> Result<MetricsReport> {
    let preds: Vec<Label> = outcomes.iter().map(|o| o.prediction.final_label).collect();
    let truths: Vec<Label> = outcomes.iter().map(|o| o.truth).collect();
    let mut report = derive_metrics(&confusion_matrix(&preds, &truths)?)?;
    let scores: Vec<f64> = outcomes.iter().map(|o| o.prediction.final_score as f64).collect();
    report.auc = match auc(&scores, &truths) {
        Ok(v) => Some(v),
        Err(Error::UndefinedAuc(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

/// Predict every sample and score the predictions.
pub fn evaluate_model(model: &VideoClassifier, samples: &[PreparedVideo]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs at least one sample".into()));
    }
    let mut outcomes = samples
        .par_iter()
        .map(|v| {
            Ok(SampleOutcome {
                id: v.id.clone(),
                truth: v.label,
                prediction: model.predict_prepared(v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Evaluation {
        report: metrics_from_outcomes(&outcomes)?,
        samples: outcomes,
    })
}

/// Write `id,truth,score,label` rows for external ROC tooling.
pub fn write_scores_csv(path: &Path, outcomes: &[SampleOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    w.write_record(["id", "truth", "score", "label"])?;
    for o in outcomes {
        w.write_record([
            o.id.clone(),
            o.truth.to_string(),
            format!("{:.6}", o.prediction.final_score),
            o.prediction.final_label.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Default patient key: the id up to its last `_` (`P001_subAS` -> `P001`).
pub fn patient_of(id: &str) -> &str {
    id.rsplit_once('_').map_or(id, |(p, _)| p)
}

/// Per-patient OR aggregation: a patient is positive if any of their videos
/// is predicted positive; the score is the maximum video score.
pub fn patient_level_outcomes(outcomes: &[SampleOutcome], key: impl Fn(&str) -> &str) -> Result<Vec<SampleOutcome>> {
    let mut groups: BTreeMap<String, Vec<&SampleOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry(key(&o.id).to_string()).or_default().push(o);
    }
    groups
        .into_iter()
        .map(|(patient, videos)| {
            let truth = videos[0].truth;
            if videos.iter().any(|v| v.truth != truth) {
                return Err(Error::InvalidArgument(format!("patient {patient} has videos with conflicting labels")));
            }
            let positive = videos.iter().any(|v| v.prediction.final_label == Label::Positive);
            let score = videos
                .iter()
                .map(|v| v.prediction.final_score)
                .fold(f32::NEG_INFINITY, f32::max);
            let label = if positive { Label::Positive } else { Label::Negative };
            Ok(SampleOutcome {
                id: patient,
                truth,
                prediction: Prediction {
                    collection_votes: vec![label],
                    collection_scores: vec![score],
                    final_label: label,
                    final_score: score,
                },
            })
        })
        .collect()
}
