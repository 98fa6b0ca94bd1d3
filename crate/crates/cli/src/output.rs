use std::path::Path;

use anyhow::{Context, Result};
use crlprune::crl::IterationLog;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iter: usize,
    pub mean_reward: f64,
    pub mean_cost: f64,
    pub lambda: f64,
    pub mean_sparsity: f64,
    pub value_loss_reward: f64,
    pub value_loss_cost: f64,
    pub policy_std: f64,
}

impl From<&IterationLog> for IterationRow {
    fn from(l: &IterationLog) -> Self {
        Self {
            iter: l.iteration,
            mean_reward: l.mean_reward,
            mean_cost: l.mean_cost,
            lambda: l.lambda,
            mean_sparsity: l.mean_sparsity,
            value_loss_reward: l.value_loss_reward,
            value_loss_cost: l.value_loss_cost,
            policy_std: l.policy_std,
        }
    }
}

/// One row per layer decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub iter: usize,
    pub episode: usize,
    pub layer: usize,
    /// Raw policy sample.
    pub action: f64,
    /// Sparsity applied after squashing.
    pub sparsity: f64,
    /// Step reward and cost: zero except on the final layer.
    pub reward: f64,
    pub cost: f64,
    /// Multiplier in force while the episode was collected.
    pub lambda: f64,
}

pub fn episode_rows(log: &IterationLog, lambda_before: f64) -> Vec<EpisodeRow> {
    let mut rows = Vec::new();
    for (e, ep) in log.episodes.iter().enumerate() {
        let t = ep.raw_actions.len();
        for (l, (&action, &sparsity)) in ep.raw_actions.iter().zip(&ep.applied).enumerate() {
            let last = l + 1 == t;
            rows.push(EpisodeRow {
                iter: log.iteration,
                episode: e,
                layer: l + 1,
                action,
                sparsity,
                reward: if last { ep.reward } else { 0.0 },
                cost: if last { ep.cost } else { 0.0 },
                lambda: lambda_before,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub iter: usize,
    pub wallclock_s: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}
