//! Versioned JSON checkpoints for the target network and for the agent.
//! Parameter arrays are stored as plain JSON number arrays with shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crl::{LagrangeState, Trainer};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Mlp, Network};
use crate::policy::{GaussianPolicy, ValueNet};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format_version: u32,
    /// Conv layers followed by the dense head layers.
    pub layer_specs: Vec<LayerSpec>,
    pub network: Network,
}

impl NetworkCheckpoint {
    pub fn new(network: &Network) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            layer_specs: network.layer_specs(),
            network: network.clone(),
        }
    }

    fn check(self) -> Result<Network> {
        check_version(self.format_version)?;
        self.network.validate()?;
        if self.layer_specs != self.network.layer_specs() {
            return Err(Error::Checkpoint("layer specs disagree with the stored parameters".into()));
        }
        Ok(self.network)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format_version: u32,
    pub policy: GaussianPolicy,
    pub value_reward: ValueNet,
    pub value_cost: ValueNet,
    pub lagrange: LagrangeState,
}

impl AgentCheckpoint {
    pub fn new(trainer: &Trainer) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            policy: trainer.policy.clone(),
            value_reward: trainer.value_reward.clone(),
            value_cost: trainer.value_cost.clone(),
            lagrange: trainer.lagrange,
        }
    }

    fn check(self) -> Result<Self> {
        check_version(self.format_version)?;
        let dim = self.policy.state_dim();
        check_mlp(&self.policy.mean, "policy mean")?;
        check_mlp(&self.value_reward.net, "reward value")?;
        check_mlp(&self.value_cost.net, "cost value")?;
        if self.policy.log_std.len() != self.policy.action_dim() || !self.policy.log_std.is_finite() {
            return Err(Error::Checkpoint("log_std does not match the action dimension".into()));
        }
        for v in [&self.value_reward, &self.value_cost] {
            if v.net.inputs() != dim || v.net.outputs() != 1 {
                return Err(Error::Checkpoint("value network does not map states to scalars".into()));
            }
        }
        if !(self.lagrange.lambda >= 0.0) {
            return Err(Error::Checkpoint(format!("negative multiplier {}", self.lagrange.lambda)));
        }
        Ok(self)
    }
}

fn check_version(v: u32) -> Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::FormatVersion(v))
    }
}

fn check_mlp(mlp: &Mlp, name: &str) -> Result<()> {
    let bad = |d: &str| Err(Error::Checkpoint(format!("{name}: {d}")));
    if mlp.layers.is_empty() {
        return bad("no layers");
    }
    for (i, d) in mlp.layers.iter().enumerate() {
        if d.weight.shape().len() != 2 || d.bias.shape() != [d.weight.shape()[0]] {
            return bad(&format!("layer {i} has inconsistent shapes"));
        }
        if i > 0 && mlp.layers[i - 1].outputs() != d.inputs() {
            return bad(&format!("layer {i} does not chain"));
        }
        if !d.weight.is_finite() || !d.bias.is_finite() {
            return bad(&format!("layer {i} is not finite"));
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_network(path: &Path, network: &Network) -> Result<()> {
    write_json(path, &NetworkCheckpoint::new(network))
}

pub fn network_from_json(text: &str) -> Result<Network> {
    let ckpt: NetworkCheckpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    ckpt.check()
}

pub fn load_network(path: &Path) -> Result<Network> {
    read_json::<NetworkCheckpoint>(path)?.check()
}

pub fn save_agent(path: &Path, trainer: &Trainer) -> Result<()> {
    write_json(path, &AgentCheckpoint::new(trainer))
}

pub fn load_agent(path: &Path) -> Result<AgentCheckpoint> {
    read_json::<AgentCheckpoint>(path)?.check()
}
