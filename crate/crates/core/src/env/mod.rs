//! Constrained MDPs the agent interacts with.
//!
//! Rewards and costs are zero except at the final step of an episode, and
//! transitions never depend on the chosen actions: an episode over a network
//! with `T` conv layers always lasts exactly `T` steps.

mod analytic;
mod pruning;
mod stat;

pub use analytic::QuadraticCmdp;
pub use pruning::{finetune, EnvConfig, EpisodeResult, PruningEnv, RewardMode};
pub use stat::{RunningStat, STD_FLOOR};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Normalized state features fed to the policy and value networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub Vec<f64>);

impl StateVec {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// `s_{t+1}`; all zeros after the terminal step.
    pub state: StateVec,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
}

pub trait Environment: Send + Sync {
    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize {
        1
    }

    /// Episode length `T`.
    fn horizon(&self) -> usize;

    /// Starts a new episode. All randomness inside the episode derives from `seed`.
    fn reset(&mut self, seed: u64) -> Result<StateVec>;

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;

    /// Tells the environment how far training has progressed, for schedules
    /// keyed on training phase.
    fn set_progress(&mut self, _iteration: usize, _total: usize) {}

    /// Maps a raw policy output to the value the environment actually applies.
    fn squash(&self, raw: f64) -> f64 {
        raw
    }
}
