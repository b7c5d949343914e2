//! The dual-branch video classifier and video-level prediction.

pub mod attention;
mod checkpoint;
mod config;
mod network;

use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};

use crate::dataset::{preprocess_frames, Label, VideoSample};
use crate::error::{Error, Result};
use crate::sampling::{
    block_inference_collections, maximal_agreement_decision, middle_collection, partition_blocks, FrameIndexCollection,
};

pub use checkpoint::{Checkpoint, CheckpointSidecar};
pub use config::{Aggregation, Architecture, BackboneDepth, DecisionRule, Fusion, ModelConfig};
pub use network::{frames_to_volume, logistic, FeatureBundle, ForwardCache, VideoClassifier};

/// A video resized and standardized for a model: `T x S x S x 3`.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub id: String,
    pub label: Label,
    pub frames: Array4<f32>,
}

impl PreparedVideo {
    pub fn new(video: &VideoSample, config: &ModelConfig) -> Result<Self> {
        Ok(Self {
            id: video.id.clone(),
            label: video.label,
            frames: preprocess_frames(video.frames().view(), config.input_size, &config.normalization)?,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }

    /// `3 x N x S x S` volume for the collection's (clamped) frame indices.
    pub fn gather(&self, collection: &FrameIndexCollection) -> Result<Array4<f32>> {
        let indices = collection.frame_indices();
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.num_frames()) {
            return Err(Error::InvalidArgument(format!(
                "frame index {bad} out of range for video {} with {} frames",
                self.id,
                self.num_frames()
            )));
        }
        let views: Vec<_> = indices.iter().map(|&i| self.frames.slice(s![i, .., .., ..])).collect();
        Ok(frames_to_volume(&views))
    }
}

/// Video-level prediction from the per-collection votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub collection_votes: Vec<Label>,
    pub collection_scores: Vec<f32>,
    pub final_label: Label,
    /// Mean of the collection scores.
    pub final_score: f32,
}

impl Prediction {
    /// Threshold scores into votes and apply the maximal agreement decision.
    pub fn from_scores(scores: Vec<f32>, threshold: f32) -> Result<Self> {
        let votes: Vec<Label> = scores.iter().map(|&p| Label::from_score(p, threshold)).collect();
        let final_label = maximal_agreement_decision(&votes)?;
        let final_score = scores.iter().sum::<f32>() / scores.len() as f32;
        Ok(Self {
            collection_votes: votes,
            collection_scores: scores,
            final_label,
            final_score,
        })
    }
}

impl VideoClassifier {
    /// Probability and feature bundle for one collection of a prepared video.
    pub fn forward(&self, collection: &FrameIndexCollection, video: &PreparedVideo) -> Result<(f32, FeatureBundle)> {
        if collection.len() != self.config().num_frames {
            return Err(Error::Config(format!(
                "collection has {} frames, model expects {}",
                collection.len(),
                self.config().num_frames
            )));
        }
        let x = video.gather(collection)?;
        let (bundle, _) = self.forward_volume(&x)?;
        Ok((bundle.probability, bundle))
    }

    /// Collections scored at inference under the configured decision rule.
    pub fn inference_collections(&self, num_frames: usize) -> Result<Vec<FrameIndexCollection>> {
        let partition = partition_blocks(num_frames, self.config().num_frames)?;
        Ok(match self.config().decision {
            DecisionRule::MajorityVote => block_inference_collections(&partition),
            DecisionRule::MiddleCollection => vec![middle_collection(&partition)],
        })
    }

    pub fn predict_prepared(&self, video: &PreparedVideo) -> Result<Prediction> {
        let scores = self
            .inference_collections(video.num_frames())?
            .iter()
            .map(|c| self.forward(c, video).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        Prediction::from_scores(scores, self.config().vote_threshold)
    }

    pub fn predict_video(&self, video: &VideoSample) -> Result<Prediction> {
        self.predict_prepared(&PreparedVideo::new(video, self.config())?)
    }
}
