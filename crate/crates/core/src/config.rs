//! Run configuration: one TOML file holding paths, model, training and
//! cross-validation settings. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{CheckpointSelection, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Fold assignment to reuse; drawn from `cv.k` and `seed` when absent.
    pub folds: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    pub repetitions: usize,
    pub selection: CheckpointSelection,
    /// Fold held out as validation by the `train` command.
    pub val_fold: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 5,
            repetitions: 1,
            selection: CheckpointSelection::HeldOutFold,
            val_fold: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: split, initialization and sampling all derive from it.
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cv: CvConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|span| text[..span.start].matches('\n').count() + 1);
            Error::Config(match line {
                Some(line) => format!("line {line}: {}", e.message()),
                None => e.message().to_string(),
            })
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Set the master seed and propagate it to the model and trainer.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.init_seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.cv.k < 2 {
            return Err(Error::Config(format!("cv.k must be >= 2, got {}", self.cv.k)));
        }
        if self.cv.repetitions == 0 {
            return Err(Error::Config("cv.repetitions must be >= 1".into()));
        }
        if self.cv.val_fold >= self.cv.k {
            return Err(Error::Config(format!("cv.val_fold {} must be < cv.k {}", self.cv.val_fold, self.cv.k)));
        }
        Ok(())
    }

    /// Write the resolved configuration as `config.resolved` under `out_dir`.
    pub fn echo(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join("config.resolved");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::default().with_seed(7);
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.train.seed, 7);
    }

    #[test]
    fn partial_file() {
        let cfg = RunConfig::from_toml("seed = 3\n[train]\nepochs = 4\n[cv]\nk = 3\n").unwrap();
        assert_eq!((cfg.seed, cfg.train.epochs, cfg.cv.k), (3, 4, 3));
        assert_eq!(cfg.train.batch_size, 32);
    }

    #[test]
    fn unknown_key_named() {
        let err = RunConfig::from_toml("[model]\nbackbone_depth = 3\n").unwrap_err();
        assert!(err.to_string().contains("backbone_depth"), "{err}");
    }

    #[test]
    fn invalid_values() {
        let cfg = RunConfig {
            cv: CvConfig { k: 1, ..Default::default() },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
