//! Checkpoint persistence: a binary parameter blob plus a JSON sidecar.
//!
//! Blob layout: the 8-byte magic `ECHOMIL\x01`, a little-endian `u64` header
//! length, a JSON header (train config, epoch, tensor names and shapes), then
//! every tensor's values as little-endian `f32` in header order. The sidecar
//! next to the blob (`<name>.json`) holds `{"config", "seed", "epoch"}`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, VideoClassifier};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::training::TrainConfig;

const MAGIC: &[u8; 8] = b"ECHOMIL\x01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSidecar {
    pub config: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlobHeader {
    train_config: Option<TrainConfig>,
    epoch: usize,
    /// First epoch a resumed run would execute; all epoch randomness derives
    /// from `(seed, epoch)`, so this is the complete sampler state.
    next_epoch: usize,
    tensors: Vec<TensorHeader>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
    pub epoch: usize,
    pub next_epoch: usize,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_model(model: &VideoClassifier, train_config: Option<TrainConfig>, seed: u64, epoch: usize) -> Self {
        Self {
            model_config: model.config().clone(),
            train_config,
            seed,
            epoch,
            next_epoch: epoch + 1,
            params: model.params().clone(),
        }
    }

    pub fn sidecar_path(blob: &Path) -> PathBuf {
        blob.with_extension("json")
    }

    pub fn to_model(&self) -> Result<VideoClassifier> {
        let config = ModelConfig {
            pretrained_backbone: false,
            ..self.model_config.clone()
        };
        let mut model = VideoClassifier::new(config)?;
        model.load_params(self.params.clone())?;
        Ok(model)
    }

    pub fn save(&self, blob: &Path) -> Result<()> {
        let header = BlobHeader {
            train_config: self.train_config.clone(),
            epoch: self.epoch,
            next_epoch: self.next_epoch,
            tensors: self
                .params
                .iter()
                .map(|(name, v)| TensorHeader {
                    name: name.to_string(),
                    shape: v.shape().to_vec(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, v) in self.params.iter() {
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        if let Some(dir) = blob.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(blob, out).map_err(|e| Error::io(blob, e))?;
        let sidecar = CheckpointSidecar {
            config: self.model_config.clone(),
            seed: self.seed,
            epoch: self.epoch,
        };
        let path = Self::sidecar_path(blob);
        fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(blob: &Path) -> Result<Self> {
        if !blob.exists() {
            return Err(Error::State(format!("checkpoint {} not found", blob.display())));
        }
        let sidecar_path = Self::sidecar_path(blob);
        let sidecar: CheckpointSidecar = serde_json::from_str(
            &fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?,
        )?;
        let bytes = fs::read(blob).map_err(|e| Error::io(blob, e))?;
        let bad = |why: &str| Error::State(format!("corrupt checkpoint {}: {why}", blob.display()));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("header overruns file"))?;
        let header: BlobHeader = serde_json::from_slice(&bytes[16..header_end])?;
        let mut params = ParamStore::new();
        let mut pos = header_end;
        for t in header.tensors {
            let n: usize = t.shape.iter().product();
            let end = pos + 4 * n;
            if end > bytes.len() {
                return Err(bad("tensor data truncated"));
            }
            let values: Vec<f32> = bytes[pos..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.add(t.name, ArrayD::from_shape_vec(IxDyn(&t.shape), values).map_err(|e| bad(&e.to_string()))?);
            pos = end;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            model_config: sidecar.config,
            train_config: header.train_config,
            seed: sidecar.seed,
            epoch: sidecar.epoch,
            next_epoch: header.next_epoch,
            params,
        })
    }
}
