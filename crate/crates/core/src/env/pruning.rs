use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Environment, StateVec, StepOutcome};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Adam, LayerSpec, Mask, Network};
use crate::pruner::{masks_from_ratios, CostFunction, NormKind};
use crate::rng::{rng_for, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// `-L(theta . M)` on the reward batch.
    #[default]
    NegLoss,
    /// Top-1 accuracy on the reward batch.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Budget `alpha`, percent of the unpruned quantity. Only recorded here;
    /// the environment measures costs and never enforces the budget.
    pub budget: f64,
    /// Size of the reward batch `B` and of each fine-tuning batch.
    pub batch_size: usize,
    /// Fine-tuning iterations per episode for each training phase.
    pub finetune_schedule: Vec<usize>,
    pub finetune_lr: f64,
    pub reward_mode: RewardMode,
    pub cost: CostFunction,
    pub norm: NormKind,
    /// Raw actions are clipped to `[0, max_sparsity]`.
    pub max_sparsity: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            budget: 30.0,
            batch_size: 60,
            finetune_schedule: vec![0, 32, 128],
            finetune_lr: 3e-4,
            reward_mode: RewardMode::NegLoss,
            cost: CostFunction::ParamFraction,
            norm: NormKind::L1,
            max_sparsity: 0.95,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0 && self.budget <= 100.0) {
            return Err(Error::Config(format!("budget must lie in (0, 100], got {}", self.budget)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.finetune_schedule.is_empty() || self.finetune_schedule.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("fine-tune schedule must be non-empty and non-decreasing".into()));
        }
        if !(self.finetune_lr > 0.0) {
            return Err(Error::Config("fine-tune learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.max_sparsity) {
            return Err(Error::Config("max sparsity must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Fine-tune iterations for an episode at `iteration` of `total`, with the
    /// schedule entries spread over equal fractions of training.
    pub fn finetune_iters(&self, iteration: usize, total: usize) -> usize {
        let phases = self.finetune_schedule.len();
        let phase = if total == 0 {
            phases - 1
        } else {
            (iteration * phases / total).min(phases - 1)
        };
        self.finetune_schedule[phase]
    }
}

/// Outcome of the terminal step of a pruning episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub sparsities: Vec<f64>,
    pub masks: Vec<Mask>,
    pub loss: f64,
    pub accuracy: f64,
    pub reward: f64,
    pub cost: f64,
    pub finetune_iters: usize,
}

/// Walks the conv layers of a pretrained network, one sparsity decision per
/// layer; the final step prunes a copy, fine-tunes it and reports reward and
/// cost.
#[derive(Debug, Clone)]
pub struct PruningEnv {
    pretrained: Arc<Network>,
    train: Arc<Dataset>,
    config: EnvConfig,
    scales: [f64; 6],
    finetune_iters: usize,
    step: usize,
    ratios: Vec<f64>,
    rng: Rng,
    active: bool,
    last: Option<EpisodeResult>,
    pruned: Option<Network>,
}

impl PruningEnv {
    pub fn new(pretrained: Arc<Network>, train: Arc<Dataset>, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let (c, h, w) = train.image_shape();
        if [c, h, w] != pretrained.input_shape() {
            return Err(Error::Config(format!(
                "dataset images are {c}x{h}x{w}, network expects {:?}",
                pretrained.input_shape()
            )));
        }
        let mut scales = [0.0f64; 6];
        for spec in pretrained.conv_layers().iter().map(|l| l.spec) {
            for (s, v) in scales.iter_mut().zip(spec.attributes()) {
                *s = s.max(v);
            }
        }
        let finetune_iters = *config.finetune_schedule.last().unwrap();
        Ok(Self {
            pretrained,
            train,
            config,
            scales,
            finetune_iters,
            step: 0,
            ratios: Vec::new(),
            rng: rng_for(0, stream::FINETUNE),
            active: false,
            last: None,
            pruned: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn pretrained(&self) -> &Network {
        &self.pretrained
    }

    /// Per-feature divisors: the largest value of each attribute over the
    /// network's conv layers.
    pub fn feature_scales(&self) -> [f64; 6] {
        self.scales
    }

    pub fn state_of(&self, spec: &LayerSpec) -> StateVec {
        StateVec(
            spec.attributes()
                .iter()
                .zip(self.scales)
                .map(|(&v, s)| if s > 0.0 { v / s } else { 0.0 })
                .collect(),
        )
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn finetune_iters(&self) -> usize {
        self.finetune_iters
    }

    /// Overrides the phase-derived fine-tuning length for subsequent episodes.
    pub fn set_finetune_iters(&mut self, iters: usize) {
        self.finetune_iters = iters;
    }

    pub fn last_episode(&self) -> Option<&EpisodeResult> {
        self.last.as_ref()
    }

    /// The pruned and fine-tuned network of the last finished episode.
    pub fn take_pruned(&mut self) -> Option<Network> {
        self.pruned.take()
    }

    fn finish(&mut self) -> Result<EpisodeResult> {
        let masks = masks_from_ratios(&self.pretrained, &self.ratios, self.config.norm)?;
        let mut net = (*self.pretrained).clone();
        net.apply_mask(&masks)?;
        finetune(&mut net, &self.train, self.finetune_iters, self.config.batch_size, self.config.finetune_lr, &mut self.rng)?;
        let (x, y) = self.train.sample_batch(self.config.batch_size, &mut self.rng);
        let loss = net.loss(&x, &y)?;
        let logits = net.forward(&x)?;
        let correct = y
            .iter()
            .enumerate()
            .filter(|&(r, &label)| crate::nn::argmax(logits.row(r)) == label)
            .count();
        let accuracy = correct as f64 / y.len() as f64;
        let reward = match self.config.reward_mode {
            RewardMode::NegLoss => -loss,
            RewardMode::Accuracy => accuracy,
        };
        let cost = self.config.cost.evaluate(&self.pretrained, &masks, Some(self.config.batch_size))?;
        self.pruned = Some(net);
        Ok(EpisodeResult {
            sparsities: self.ratios.clone(),
            masks,
            loss,
            accuracy,
            reward,
            cost,
            finetune_iters: self.finetune_iters,
        })
    }
}

/// Fine-tunes with a fresh Adam state on uniformly sampled batches.
pub fn finetune(net: &mut Network, data: &Dataset, iters: usize, batch: usize, lr: f64, rng: &mut Rng) -> Result<()> {
    if iters == 0 {
        return Ok(());
    }
    let mut opt = Adam::new(net.params());
    for _ in 0..iters {
        let (x, y) = data.sample_batch(batch, rng);
        net.train_step(&x, &y, &mut opt, lr)?;
    }
    Ok(())
}

impl Environment for PruningEnv {
    fn state_dim(&self) -> usize {
        6
    }

    fn horizon(&self) -> usize {
        self.pretrained.depth()
    }

    fn reset(&mut self, seed: u64) -> Result<StateVec> {
        self.rng = rng_for(seed, stream::FINETUNE);
        self.step = 1;
        self.ratios.clear();
        self.active = true;
        self.pruned = None;
        Ok(self.state_of(&self.pretrained.conv_layers()[0].spec))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if !self.active {
            return Err(Error::EpisodeDone);
        }
        let raw = *action.first().ok_or_else(|| Error::Config("empty action".into()))?;
        if !raw.is_finite() {
            return Err(Error::NonFinite(format!("action {raw}")));
        }
        self.ratios.push(self.squash(raw));
        let t = self.step;
        if t < self.horizon() {
            self.step += 1;
            return Ok(StepOutcome {
                state: self.state_of(&self.pretrained.conv_layers()[t].spec),
                reward: 0.0,
                cost: 0.0,
                done: false,
            });
        }
        self.active = false;
        let result = self.finish()?;
        let outcome = StepOutcome {
            state: StateVec::zeros(6),
            reward: result.reward,
            cost: result.cost,
            done: true,
        };
        self.last = Some(result);
        Ok(outcome)
    }

    fn set_progress(&mut self, iteration: usize, total: usize) {
        self.finetune_iters = self.config.finetune_iters(iteration, total);
    }

    fn squash(&self, raw: f64) -> f64 {
        raw.clamp(0.0, self.config.max_sparsity)
    }
}
