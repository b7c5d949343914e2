//! Training with block random selection, checkpoint selection and k-fold
//! cross-validation.

mod config;
mod cv;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Label, VideoSample};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, MetricsReport};
use crate::model::{Checkpoint, ModelConfig, PreparedVideo, VideoClassifier};
use crate::nn::Gradients;
use crate::sampling::{block_first_select, block_random_select, partition_blocks, FrameIndexCollection};

pub use config::{Optimizer, TrainConfig, TrainSampling};
pub use cv::{run_cross_validation, run_cross_validation_with, CheckpointSelection, CvReport, FoldResult};

/// Binary cross-entropy with logits against the target `(label + 1) / 2`,
/// evaluated as `max(x, 0) - x t + ln(1 + e^{-|x|})` so large logits neither
/// overflow nor lose the small tail.
pub fn compute_loss(logit: f64, label: Label) -> Result<f64> {
    if !logit.is_finite() {
        return Err(Error::Numeric(format!("non-finite logit {logit}")));
    }
    let t = label.target() as f64;
    Ok(logit.max(0.0) - logit * t + (-logit.abs()).exp().ln_1p())
}

/// Seed derived from `(seed, epoch, key)`: the first 8 bytes of their SHA-256.
pub fn derive_seed(seed: u64, epoch: usize, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((epoch as u64).to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// The frames a video contributes to training in `epoch`.
pub fn training_collection(
    video_id: &str,
    num_frames: usize,
    model_frames: usize,
    config: &TrainConfig,
    epoch: usize,
) -> Result<FrameIndexCollection> {
    let partition = partition_blocks(num_frames, model_frames)?;
    Ok(match config.sampling {
        TrainSampling::BlockRandom => block_random_select(&partition, derive_seed(config.seed, epoch, video_id)),
        TrainSampling::BlockFirst => block_first_select(&partition),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample loss over the epoch's training collections.
    pub train_loss: f64,
    /// Accuracy of the training collections' votes, as seen during the epoch.
    pub train_accuracy: f64,
    pub val_metrics: Option<MetricsReport>,
}

/// Training log as JSON lines, one record per epoch.
pub fn write_epoch_log(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

/// Standardize videos for `config`, in parallel.
pub fn prepare_videos(videos: &[VideoSample], config: &ModelConfig) -> Result<Vec<PreparedVideo>> {
    videos.par_iter().map(|v| PreparedVideo::new(v, config)).collect()
}

/// A fresh model; when `pretrained_backbone` is set, the spatial backbone is
/// copied from the checkpoint named by `backbone_weights`.
pub fn build_model(config: &ModelConfig) -> Result<VideoClassifier> {
    let mut model = VideoClassifier::new(config.clone())?;
    if config.pretrained_backbone {
        let path = config
            .backbone_weights
            .as_deref()
            .ok_or_else(|| Error::Config("pretrained_backbone needs backbone_weights".into()))?;
        let source = Checkpoint::load(path)?;
        let copied = model.load_backbone_from(&source.params);
        if copied == 0 {
            return Err(Error::State(format!("{} holds no compatible backbone tensors", path.display())));
        }
        log::info!("loaded {copied} backbone tensors from {}", path.display());
    }
    Ok(model)
}

/// Fail if any id appears in both sets.
pub fn check_disjoint(train: &[PreparedVideo], val: &[PreparedVideo]) -> Result<()> {
    let train_ids: HashSet<&str> = train.iter().map(|v| v.id.as_str()).collect();
    let mut shared: Vec<&str> = val
        .iter()
        .map(|v| v.id.as_str())
        .filter(|id| train_ids.contains(id))
        .collect();
    if shared.is_empty() {
        return Ok(());
    }
    shared.sort_unstable();
    Err(Error::Leakage {
        count: shared.len(),
        first: shared[0].to_string(),
    })
}

struct SampleStep {
    grads: Gradients,
    loss: f64,
    correct: bool,
}

fn sample_step(model: &VideoClassifier, video: &PreparedVideo, collection: &FrameIndexCollection) -> Result<SampleStep> {
    let x = video.gather(collection)?;
    let (bundle, cache) = model.forward_volume(&x)?;
    let loss = compute_loss(bundle.logit as f64, video.label)?;
    let mut grads = model.zero_grads();
    model.backward(&bundle, &cache, bundle.probability - video.label.target(), &mut grads);
    Ok(SampleStep {
        grads,
        loss,
        correct: Label::from_score(bundle.probability, model.config().vote_threshold) == video.label,
    })
}

struct Sgd {
    learning_rate: f32,
    momentum: Option<(f32, Gradients)>,
}

impl Sgd {
    fn new(model: &VideoClassifier, config: &TrainConfig) -> Self {
        Self {
            learning_rate: config.learning_rate as f32,
            momentum: (config.optimizer == Optimizer::SgdMomentum)
                .then(|| (config.momentum as f32, model.zero_grads())),
        }
    }

    fn step(&mut self, model: &mut VideoClassifier, grads: &Gradients) {
        let update = match &mut self.momentum {
            Some((mu, velocity)) => {
                velocity.scale(*mu);
                velocity.add_assign(grads);
                &*velocity
            }
            None => grads,
        };
        let lr = self.learning_rate;
        for (p, g) in model.params_mut().values_mut().zip(update.iter()) {
            p.scaled_add(-lr, g);
        }
    }
}

/// Train one model on `train`, scoring `val` after every epoch.
///
/// Returns the checkpoint with the best validation accuracy (ties broken by
/// AUC, then by the later epoch) together with every epoch's record. Without
/// validation samples the final epoch is returned.
pub fn train_fold(
    train: &[PreparedVideo],
    val: &[PreparedVideo],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one sample".into()));
    }
    check_disjoint(train, val)?;
    train_config.validate()?;
    let mut model = build_model(model_config)?;
    let mut sgd = Sgd::new(&model, train_config);
    let workers = rayon::current_num_threads().max(1);
    let n = model_config.num_frames;

    let mut records = Vec::with_capacity(train_config.epochs);
    let mut best: Option<((f64, f64), Checkpoint)> = None;
    for epoch in 1..=train_config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(train_config.seed, epoch, "\0order")));

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(train_config.batch_size) {
            let mut grads = model.zero_grads();
            // Gradients are summed in batch order whatever the worker count.
            for chunk in batch.chunks(workers) {
                let steps = chunk
                    .par_iter()
                    .map(|&i| {
                        let v = &train[i];
                        let c = training_collection(&v.id, v.num_frames(), n, train_config, epoch)?;
                        sample_step(&model, v, &c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                for s in steps {
                    grads.add_assign(&s.grads);
                    loss_sum += s.loss;
                    correct += s.correct as usize;
                }
            }
            grads.scale(1.0 / batch.len() as f32);
            if let Some(max_norm) = train_config.clip_grad_norm {
                let norm = grads.squared_norm().sqrt();
                if norm > max_norm {
                    grads.scale((max_norm / norm) as f32);
                }
            }
            sgd.step(&mut model, &grads);
        }

        let val_metrics = if val.is_empty() {
            None
        } else {
            Some(evaluate_model(&model, val)?.report)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_metrics,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train acc {:.3} val acc {}",
            record.train_loss,
            record.train_accuracy,
            record
                .val_metrics
                .as_ref()
                .and_then(|m| m.accuracy)
                .map_or("-".into(), |a| format!("{a:.3}"))
        );
        let score = record
            .val_metrics
            .as_ref()
            .map(|m| (m.accuracy.unwrap_or(0.0), m.auc.unwrap_or(0.0)))
            .unwrap_or((0.0, 0.0));
        if best.as_ref().is_none_or(|(b, _)| score >= *b) {
            best = Some((score, Checkpoint::from_model(&model, Some(train_config.clone()), train_config.seed, epoch)));
        }
        records.push(record);
    }
    let (_, checkpoint) = best.expect("at least one epoch ran");
    Ok((checkpoint, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((compute_loss(0.0, Label::Positive).unwrap() - ln2).abs() < 1e-12);
        assert!((compute_loss(0.0, Label::Negative).unwrap() - ln2).abs() < 1e-12);
        assert!(compute_loss(20.0, Label::Positive).unwrap() < 1e-8);
        assert!((compute_loss(1.0, Label::Positive).unwrap() - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
        assert!((compute_loss(1.0, Label::Positive).unwrap() - 0.31326).abs() < 1e-5);
        assert!((compute_loss(-1e4, Label::Positive).unwrap() - 1e4).abs() < 1e-9);
        assert_eq!(compute_loss(1e4, Label::Positive).unwrap(), 0.0);
        assert!(matches!(compute_loss(f64::NAN, Label::Positive), Err(Error::Numeric(_))));
        assert!(matches!(compute_loss(f64::INFINITY, Label::Negative), Err(Error::Numeric(_))));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_eq!(derive_seed(1, 2, "a"), derive_seed(1, 2, "a"));
        assert_ne!(derive_seed(1, 2, "a"), derive_seed(1, 3, "a"));
        assert_ne!(derive_seed(1, 2, "a"), derive_seed(2, 2, "a"));
        assert_ne!(derive_seed(1, 2, "a"), derive_seed(1, 2, "b"));
    }

    #[test]
    fn brs_is_fresh_across_epochs() {
        let cfg = TrainConfig::default();
        let draws: HashSet<Vec<usize>> = (1..=5)
            .map(|e| training_collection("v", 48, 16, &cfg, e).unwrap().frame_indices())
            .collect();
        assert!(draws.len() > 1);
        let fixed = TrainConfig {
            sampling: TrainSampling::BlockFirst,
            ..cfg
        };
        let draws: HashSet<Vec<usize>> = (1..=5)
            .map(|e| training_collection("v", 48, 16, &fixed, e).unwrap().frame_indices())
            .collect();
        assert_eq!(draws.len(), 1);
    }
}
