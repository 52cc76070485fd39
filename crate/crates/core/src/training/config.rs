use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightstage::LayoutConfig;
use crate::model::{Mode, NetworkConfig};
use crate::netcore::AdamConfig;
use crate::objective::{SignConvention, DEFAULT_LAMBDA};
use crate::shading::SamplingConfig;

/// Splits a total measurement budget between the branches: the sensitive
/// branch gets the largest odd count not above half, the insensitive branch
/// the rest (6 → 3+3, 8 → 3+5, 10 → 5+5).
pub fn split_budget(total: usize) -> Result<(usize, usize)> {
    if total < 2 {
        return Err(Error::Config(format!(
            "budget {total} leaves a branch without measurements"
        )));
    }
    let half = total / 2;
    let ms = if half % 2 == 1 { half } else { half.max(2) - 1 };
    Ok((ms, total - ms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub layout: LayoutConfig,
    /// Measurements of the sensitive and insensitive branch (light-stage mode).
    pub budget: (usize, usize),
    /// Points per batch; each point is seen from two views.
    pub k: usize,
    pub iters_pretrain: u64,
    pub iters_joint: u64,
    pub learning_rate: f64,
    /// Standard deviation of the multiplicative measurement noise.
    pub sigma: f64,
    pub lambda: f64,
    pub sign: SignConvention,
    pub seed: u64,
    pub sampling: SamplingConfig,
    /// Save a checkpoint every this many iterations of each phase (0: never).
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk(0)
    }
}

impl TrainConfig {
    /// 384 emitters, 3 + 5 measurements, 20K iterations per branch then 60K joint.
    pub fn desk(seed: u64) -> Self {
        Self {
            mode: Mode::Lightstage,
            layout: LayoutConfig::desk(),
            budget: (3, 5),
            k: 32,
            iters_pretrain: 20_000,
            iters_joint: 60_000,
            learning_rate: 1e-4,
            sigma: 0.01,
            lambda: DEFAULT_LAMBDA,
            sign: SignConvention::Similarity,
            seed,
            sampling: SamplingConfig::default(),
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }

    /// 24,576 emitters, 100K iterations per branch then 300K joint.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            layout: LayoutConfig::full_scale(),
            iters_pretrain: 100_000,
            iters_joint: 300_000,
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("batch size k must be >= 1".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        self.sampling.validate()?;
        self.network_config().validate()
    }

    pub fn network_config(&self) -> NetworkConfig {
        match self.mode {
            Mode::Lightstage => NetworkConfig::lightstage(self.layout, self.budget.0, self.budget.1),
            Mode::Pointlight => NetworkConfig::pointlight(),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}
