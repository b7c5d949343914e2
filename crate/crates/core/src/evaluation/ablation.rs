use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::{render_table, AggregateMetrics};
use crate::dataset::FoldSplit;
use crate::error::Result;
use crate::model::{Aggregation, BackboneDepth, DecisionRule, ModelConfig, PreparedVideo};
use crate::training::{run_cross_validation, CvReport, TrainConfig, TrainSampling};

const ON: &str = "✓";
const OFF: &str = "✗";

/// One configuration of two binary switches and its cross-validated result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub switches: [bool; 2],
    pub aggregate: AggregateMetrics,
    /// Number of collection votes behind each video's final decision.
    pub vote_counts: BTreeMap<String, usize>,
}

impl AblationRow {
    fn from_report(switches: [bool; 2], report: &CvReport) -> Self {
        let vote_counts = report
            .folds
            .iter()
            .flat_map(|f| &f.samples)
            .map(|s| (s.id.clone(), s.prediction.collection_votes.len()))
            .collect();
        Self {
            switches,
            aggregate: report.aggregate.clone(),
            vote_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Rows over (3D fusion, attention aggregation), scored with a single
    /// middle collection and first-frame training sampling.
    pub fusion_attention: Vec<AblationRow>,
    /// Rows over (majority vote, block random selection) for the full model.
    pub vote_sampling: Vec<AblationRow>,
}

fn mark(on: bool) -> String {
    (if on { ON } else { OFF }).to_string()
}

fn render(model: &str, switch_names: [&str; 2], rows: &[AblationRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                if i == 0 { model.to_string() } else { String::new() },
                mark(r.switches[0]),
                mark(r.switches[1]),
                r.aggregate.accuracy.render_percent(),
            ]
        })
        .collect();
    render_table(&["Model", switch_names[0], switch_names[1], "Accuracy(%)"], &body)
}

impl AblationReport {
    pub fn render(&self, backbone: BackboneDepth) -> String {
        let base = match backbone {
            BackboneDepth::Resnet18 => "ResNet18",
            BackboneDepth::Toy => "Toy ResNet",
        };
        format!(
            "{}\n{}\nAccuracy: mean±std over folds (population std).\n",
            render(base, ["3D Fusion", "AAM"], &self.fusion_attention),
            render("Our model", ["MAD", "BRS"], &self.vote_sampling),
        )
    }
}

const GRID: [[bool; 2]; 4] = [[false, false], [false, true], [true, false], [true, true]];

/// Cross-validate the two switch grids.
///
/// The component grid switches the 3D branch and attention pooling (mean
/// pooling when off) with majority voting and random block selection both
/// off; its full row is therefore the first row of the vote/sampling grid and
/// is trained once.
pub fn run_ablation_grid(
    videos: &[PreparedVideo],
    split: &FoldSplit,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
) -> Result<AblationReport> {
    let run = |temporal: bool, attention: bool, vote: bool, random: bool| -> Result<CvReport> {
        let model = ModelConfig {
            temporal_branch: temporal,
            aggregation: if attention { Aggregation::Attention } else { Aggregation::Mean },
            decision: if vote { DecisionRule::MajorityVote } else { DecisionRule::MiddleCollection },
            ..base_model.clone()
        };
        let train = TrainConfig {
            sampling: if random { TrainSampling::BlockRandom } else { TrainSampling::BlockFirst },
            ..base_train.clone()
        };
        log::info!("ablation: 3D {temporal} AAM {attention} MAD {vote} BRS {random}");
        run_cross_validation(videos, split, &model, &train)
    };

    let mut fusion_attention = Vec::new();
    let mut shared = None;
    for [temporal, attention] in GRID {
        let report = run(temporal, attention, false, false)?;
        fusion_attention.push(AblationRow::from_report([temporal, attention], &report));
        if temporal && attention {
            shared = Some(report);
        }
    }
    let mut vote_sampling = Vec::new();
    for [vote, random] in GRID {
        let report = match (vote, random, &shared) {
            (false, false, Some(r)) => r.clone(),
            _ => run(true, true, vote, random)?,
        };
        vote_sampling.push(AblationRow::from_report([vote, random], &report));
    }
    Ok(AblationReport {
        fusion_attention,
        vote_sampling,
    })
}
