use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain stochastic gradient descent.
    #[default]
    Sgd,
    /// SGD with heavy-ball momentum (`TrainConfig::momentum`).
    SgdMomentum,
}

/// How the training collection is drawn from each video every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSampling {
    /// One uniformly random frame per block, redrawn every epoch.
    #[default]
    BlockRandom,
    /// The first frame of every block, fixed across epochs.
    BlockFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Only used with [`Optimizer::SgdMomentum`].
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub sampling: TrainSampling,
    /// Rescale each batch gradient to at most this global L2 norm.
    pub clip_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            optimizer: Optimizer::Sgd,
            momentum: 0.9,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            sampling: TrainSampling::BlockRandom,
            clip_grad_norm: None,
        }
    }
}

impl TrainConfig {
    /// Recipe for the toy model on small synthetic sets: momentum SGD with
    /// small batches, so a few dozen videos still give several updates per
    /// epoch, and a gradient-norm cap, since the network has no batch
    /// normalization to keep early updates in check.
    pub fn toy() -> Self {
        Self {
            learning_rate: 0.02,
            optimizer: Optimizer::SgdMomentum,
            batch_size: 4,
            epochs: 40,
            clip_grad_norm: Some(1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("train.learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("train.momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if let Some(c) = self.clip_grad_norm.filter(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config(format!("train.clip_grad_norm must be > 0, got {c}")));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        TrainConfig::toy().validate().unwrap();
        assert_eq!((c.learning_rate, c.batch_size, c.epochs), (1e-4, 32, 100));
        assert_eq!(c.optimizer, Optimizer::Sgd);
    }

    #[test]
    fn invariants() {
        for bad in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let err = toml::from_str::<TrainConfig>("lr = 0.1").unwrap_err();
        assert!(err.to_string().contains("lr"));
    }
}
