//! Experiment configuration: one versioned JSON document from which every
//! output of a run is derived.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crlprune::crl::PpoConfig;
use crlprune::data::{BinaryFormat, Dataset, SyntheticSpec};
use crlprune::env::EnvConfig;
use crlprune::pruner::CostFunction;
use crlprune::Architecture;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    /// Fixed-size records: one label byte followed by channel-major pixels.
    Binary {
        train: PathBuf,
        test: PathBuf,
        format: BinaryFormat,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic(SyntheticSpec::default())
    }
}

impl DatasetConfig {
    /// Train and test splits.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetConfig::Synthetic(spec) => Ok(spec.generate(seed)?),
            DatasetConfig::Binary { train, test, format } => {
                let tr = Dataset::load_binary(train, format).with_context(|| format!("loading {}", train.display()))?;
                let te = Dataset::load_binary(test, format).with_context(|| format!("loading {}", test.display()))?;
                Ok((tr, te))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 60,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub architecture: Architecture,
    pub pretrain: PretrainConfig,
    /// Holds the budget `alpha` (`env.budget`) and the cost function.
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    /// Fine-tuning steps for the delivered network and for the baseline.
    pub final_finetune_steps: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            seed: 0,
            dataset: DatasetConfig::default(),
            architecture: Architecture::default(),
            pretrain: PretrainConfig::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            final_finetune_steps: 128,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub cost: Option<CostFunction>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(alpha) = o.alpha {
            self.env.budget = alpha;
        }
        if let Some(cost) = &o.cost {
            self.env.cost = cost.clone();
        }
        if let Some(workers) = o.workers {
            self.ppo.workers = workers;
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            bail!("config format version {} is not supported (expected {CONFIG_VERSION})", self.format_version);
        }
        if self.pretrain.batch_size == 0 || !(self.pretrain.lr > 0.0) {
            bail!("pretrain batch size and learning rate must be positive");
        }
        self.env.validate()?;
        self.ppo.validate()?;
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.env.budget
    }

    /// Writes the resolved configuration as `config.json` in the output directory.
    pub fn write_resolved(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        crate::output::write_json(&self.out_dir.join("config.json"), self)
    }
}
