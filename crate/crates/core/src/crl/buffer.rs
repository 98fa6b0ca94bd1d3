use serde::{Deserialize, Serialize};

use crate::env::{RunningStat, StateVec};

/// One environment step `(s_t, a_t, s_{t+1}, r, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateVec,
    /// Raw (pre-squash) action, `d_a` entries.
    pub action: Vec<f64>,
    pub next_state: StateVec,
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    /// `log pi_behaviour(a_t | s_t)` cached at collection time.
    pub log_probs: Vec<f64>,
    /// Action values the environment applied after squashing.
    pub applied: Vec<f64>,
    /// Terminal reward and cost before normalization.
    pub raw_reward: f64,
    pub raw_cost: f64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// The dataset `D` gathered in one iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub episodes: Vec<Episode>,
}

impl RolloutBuffer {
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| e.transitions.iter())
    }

    pub fn log_probs(&self) -> Vec<f64> {
        self.episodes.iter().flat_map(|e| e.log_probs.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// States and actions as flat row-major arrays.
    pub fn states_actions(&self) -> (Vec<f64>, Vec<f64>) {
        let mut states = Vec::new();
        let mut actions = Vec::new();
        for t in self.transitions() {
            states.extend_from_slice(t.state.as_slice());
            actions.extend_from_slice(&t.action);
        }
        (states, actions)
    }

    pub fn mean_raw_reward(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.raw_reward))
    }

    pub fn mean_raw_cost(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.raw_cost))
    }

    pub fn mean_applied_action(&self) -> f64 {
        mean(self.episodes.iter().flat_map(|e| e.applied.iter().copied()))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Running normalizers for the terminal reward and cost.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Normalizer {
    pub enabled: bool,
    pub reward: RunningStat,
    pub cost: RunningStat,
}

impl Normalizer {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            ..Self::default()
        }
    }

    /// Updates the statistics with the terminal values of each episode (in
    /// order) and rewrites those values normalized. Non-terminal steps keep
    /// their zero reward and cost.
    pub fn apply(&mut self, buffer: &mut RolloutBuffer) {
        if !self.enabled {
            return;
        }
        for ep in &mut buffer.episodes {
            let last = ep.transitions.last_mut().expect("episodes are never empty");
            last.reward = self.reward.update_and_normalize(last.reward);
            last.cost = self.cost.update_and_normalize(last.cost);
        }
    }

    /// The budget expressed in normalized cost units.
    pub fn budget(&self, alpha: f64) -> f64 {
        if self.enabled {
            self.cost.normalize(alpha)
        } else {
            alpha
        }
    }
}
