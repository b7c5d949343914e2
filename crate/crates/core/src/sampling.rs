//! Block partitioning, block random selection, offset-based inference
//! collections and the maximal agreement decision over collection votes.
//!
//! A video of `T` frames is padded at the index level to the next multiple of
//! `N` blocks by repeating its last frame, so every block holds exactly
//! `K = padded / N` positions. Collections store positions in the padded index
//! space; [`FrameIndexCollection::frame_indices`] clamps them to real frames.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub num_frames: usize,
    pub num_frames_padded: usize,
    pub num_blocks: usize,
    pub block_size: usize,
    pub boundaries: Vec<Range<usize>>,
}

impl BlockPartition {
    /// Map a padded position to the real frame it reads.
    pub fn clamp(&self, index: usize) -> usize {
        index.min(self.num_frames - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionOrigin {
    TrainingRandom,
    TrainingFirst,
    InferenceOffset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIndexCollection {
    /// One padded position per block, strictly increasing.
    pub indices: Vec<usize>,
    pub origin: CollectionOrigin,
    /// Position within each block for inference collections.
    pub offset: Option<usize>,
    num_frames: usize,
}

impl FrameIndexCollection {
    /// Real frame indices to read, with padding positions clamped to the last frame.
    pub fn frame_indices(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| i.min(self.num_frames - 1)).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Check one position per block, each inside its block's range.
    pub fn is_valid_for(&self, partition: &BlockPartition) -> bool {
        self.indices.len() == partition.num_blocks
            && self.num_frames == partition.num_frames
            && self
                .indices
                .iter()
                .zip(&partition.boundaries)
                .all(|(i, block)| block.contains(i))
            && self.indices.windows(2).all(|w| w[0] < w[1])
    }

    /// Collection over explicit real-frame indices, used when callers pick frames directly.
    pub fn from_frames(indices: Vec<usize>, num_frames: usize) -> Result<Self> {
        if indices.is_empty() || indices.iter().any(|&i| i >= num_frames) {
            return Err(Error::InvalidArgument(format!(
                "frame indices {indices:?} out of range for {num_frames} frames"
            )));
        }
        Ok(Self {
            indices,
            origin: CollectionOrigin::InferenceOffset,
            offset: None,
            num_frames,
        })
    }
}

pub fn partition_blocks(num_frames: usize, n_blocks: usize) -> Result<BlockPartition> {
    if num_frames == 0 || n_blocks == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least one frame and one block, got {num_frames} frames and {n_blocks} blocks"
        )));
    }
    if num_frames < n_blocks {
        log::warn!("video has {num_frames} frames, fewer than {n_blocks} blocks; trailing blocks repeat the last frame");
    }
    let block_size = num_frames.div_ceil(n_blocks);
    let padded = block_size * n_blocks;
    Ok(BlockPartition {
        num_frames,
        num_frames_padded: padded,
        num_blocks: n_blocks,
        block_size,
        boundaries: (0..n_blocks).map(|b| b * block_size..(b + 1) * block_size).collect(),
    })
}

/// One uniformly random position per block.
pub fn block_random_select(partition: &BlockPartition, rng_seed: u64) -> FrameIndexCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let indices = partition
        .boundaries
        .iter()
        .map(|block| rng.random_range(block.clone()))
        .collect();
    FrameIndexCollection {
        indices,
        origin: CollectionOrigin::TrainingRandom,
        offset: None,
        num_frames: partition.num_frames,
    }
}

/// First position of every block; the training sampler when block random selection is off.
pub fn block_first_select(partition: &BlockPartition) -> FrameIndexCollection {
    FrameIndexCollection {
        indices: partition.boundaries.iter().map(|b| b.start).collect(),
        origin: CollectionOrigin::TrainingFirst,
        offset: None,
        num_frames: partition.num_frames,
    }
}

/// Collection taking position `offset` inside every block.
pub fn offset_collection(partition: &BlockPartition, offset: usize) -> Result<FrameIndexCollection> {
    if offset >= partition.block_size {
        return Err(Error::InvalidArgument(format!(
            "offset {offset} outside block of size {}",
            partition.block_size
        )));
    }
    Ok(FrameIndexCollection {
        indices: partition.boundaries.iter().map(|b| b.start + offset).collect(),
        origin: CollectionOrigin::InferenceOffset,
        offset: Some(offset),
        num_frames: partition.num_frames,
    })
}

/// All `K` offset collections; together they visit every real frame once.
pub fn block_inference_collections(partition: &BlockPartition) -> Vec<FrameIndexCollection> {
    (0..partition.block_size)
        .map(|o| offset_collection(partition, o).expect("offset below block size"))
        .collect()
}

/// The single middle-offset collection used when majority voting is disabled.
pub fn middle_collection(partition: &BlockPartition) -> FrameIndexCollection {
    offset_collection(partition, partition.block_size / 2).expect("middle offset below block size")
}

/// Majority label over collection votes; ties go to the positive class.
pub fn maximal_agreement_decision(votes: &[Label]) -> Result<Label> {
    if votes.is_empty() {
        return Err(Error::InvalidArgument("maximal agreement decision needs at least one vote".into()));
    }
    let positives = votes.iter().filter(|&&v| v == Label::Positive).count();
    Ok(if 2 * positives >= votes.len() {
        Label::Positive
    } else {
        Label::Negative
    })
}
