use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::Normalization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneDepth {
    /// 18-layer residual network: 7x7 stem, max pool, four stages of two blocks.
    Resnet18,
    /// Reduced variant: 3x3 stride-2 stem, four stages of one block.
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Concat,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Attention,
    /// Uniform `1/J` weights.
    Mean,
}

/// How per-collection votes become a video label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Score all `K` block-offset collections and take the majority vote.
    MajorityVote,
    /// Score only the middle-offset collection.
    MiddleCollection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_frames: usize,
    pub input_size: usize,
    pub spatial_feature_dim: usize,
    pub attention_hidden_dim: usize,
    pub temporal_feature_dim: usize,
    pub backbone: BackboneDepth,
    pub pretrained_backbone: bool,
    /// Checkpoint blob whose matching `spatial.*` tensors seed the backbone
    /// when `pretrained_backbone` is set.
    pub backbone_weights: Option<PathBuf>,
    pub fusion: Fusion,
    /// Graft the 3D branch onto stage 2 and fuse its feature.
    pub temporal_branch: bool,
    pub aggregation: Aggregation,
    pub decision: DecisionRule,
    pub vote_threshold: f32,
    pub normalization: Normalization,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_frames: 16,
            input_size: 224,
            spatial_feature_dim: 512,
            attention_hidden_dim: 1024,
            temporal_feature_dim: 512,
            backbone: BackboneDepth::Resnet18,
            pretrained_backbone: false,
            backbone_weights: None,
            fusion: Fusion::Concat,
            temporal_branch: true,
            aggregation: Aggregation::Attention,
            decision: DecisionRule::MajorityVote,
            vote_threshold: 0.5,
            normalization: Normalization::default(),
            init_seed: 0,
        }
    }
}

/// Layer layout derived from a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub stem_width: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub max_pool: bool,
    pub widths: [usize; 4],
    pub strides: [usize; 4],
    pub blocks: [usize; 4],
    /// Widths of the three 3D residual stages fed by 2D stage 2.
    pub temporal_widths: [usize; 3],
    pub temporal_strides: [usize; 3],
}

impl ModelConfig {
    /// Small configuration for CPU experiments: 32x32 input, 32-d features.
    pub fn toy() -> Self {
        Self {
            input_size: 32,
            spatial_feature_dim: 32,
            attention_hidden_dim: 32,
            temporal_feature_dim: 32,
            backbone: BackboneDepth::Toy,
            ..Self::default()
        }
    }

    pub fn architecture(&self) -> Architecture {
        let d = self.spatial_feature_dim;
        match self.backbone {
            BackboneDepth::Resnet18 => Architecture {
                stem_width: 64,
                stem_kernel: 7,
                stem_stride: 2,
                max_pool: true,
                widths: [64, 128, 256, d],
                strides: [1, 2, 2, 2],
                blocks: [2, 2, 2, 2],
                temporal_widths: [128, 256, self.temporal_feature_dim],
                temporal_strides: [1, 2, 2],
            },
            BackboneDepth::Toy => Architecture {
                stem_width: 8,
                stem_kernel: 3,
                stem_stride: 2,
                max_pool: false,
                widths: [8, 16, 32, d],
                strides: [1, 2, 1, 1],
                blocks: [1, 1, 1, 1],
                temporal_widths: [16, 32, self.temporal_feature_dim],
                temporal_strides: [1, 2, 2],
            },
        }
    }

    /// Length of the fused representation fed to the classifier head.
    pub fn fused_dim(&self) -> usize {
        match (self.temporal_branch, self.fusion) {
            (false, _) => self.spatial_feature_dim,
            (true, Fusion::Concat) => self.spatial_feature_dim + self.temporal_feature_dim,
            (true, Fusion::Sum) => self.spatial_feature_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_frames", self.num_frames),
            ("input_size", self.input_size),
            ("spatial_feature_dim", self.spatial_feature_dim),
            ("attention_hidden_dim", self.attention_hidden_dim),
            ("temporal_feature_dim", self.temporal_feature_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if self.input_size < 8 {
            return Err(Error::Config(format!("model.input_size must be >= 8, got {}", self.input_size)));
        }
        if self.temporal_branch && self.fusion == Fusion::Sum && self.spatial_feature_dim != self.temporal_feature_dim {
            return Err(Error::Config(format!(
                "fusion = sum needs spatial_feature_dim == temporal_feature_dim, got {} and {}",
                self.spatial_feature_dim, self.temporal_feature_dim
            )));
        }
        if self.temporal_branch && self.num_frames < 2 {
            return Err(Error::Config("the temporal branch needs num_frames >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.vote_threshold) {
            return Err(Error::Config(format!("vote_threshold must be in [0, 1], got {}", self.vote_threshold)));
        }
        if self.normalization.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        if self.pretrained_backbone && self.backbone_weights.is_none() {
            return Err(Error::Config(
                "pretrained_backbone = true requires model.backbone_weights to name a checkpoint".into(),
            ));
        }
        Ok(())
    }
}
