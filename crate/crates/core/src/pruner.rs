//! Magnitude-based filter selection and the budget cost functions `f(M)`.
//!
//! Costs are expressed as a percentage of the unpruned network. Counting is
//! structural: a pruned filter removes its own weights and bias, the matching
//! input slice of every filter in the next conv layer, and the head weights
//! that read its feature map.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Mask, Network};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    L1,
    L2,
}

/// Norm of each filter's weight slice (leading dimension = filters).
pub fn filter_norms(weights: &Tensor, kind: NormKind) -> Vec<f64> {
    (0..weights.shape()[0])
        .map(|f| {
            let w = weights.row(f);
            match kind {
                NormKind::L1 => w.iter().map(|x| x.abs()).sum(),
                NormKind::L2 => w.iter().map(|x| x * x).sum::<f64>().sqrt(),
            }
        })
        .collect()
}

/// Prunes `floor(ratio * n)` filters with the smallest norms; equal norms
/// prune the lower index first.
pub fn mask_from_sparsity(norms: &[f64], ratio: f64) -> Result<Mask> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::SparsityRatio(ratio));
    }
    let n = norms.len();
    let zeros = pruned_count(n, ratio);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut keep = vec![true; n];
    for &i in &order[..zeros] {
        keep[i] = false;
    }
    Ok(Mask::from_bools(keep))
}

/// Number of filters removed at `ratio`; at least one always survives.
pub fn pruned_count(filters: usize, ratio: f64) -> usize {
    ((ratio * filters as f64).floor() as usize).min(filters.saturating_sub(1))
}

/// Layerwise magnitude masks for one sparsity ratio per conv layer.
pub fn masks_from_ratios(net: &Network, ratios: &[f64], norm: NormKind) -> Result<Vec<Mask>> {
    if ratios.len() != net.depth() {
        return Err(Error::MaskCount {
            expected: net.depth(),
            got: ratios.len(),
        });
    }
    net.conv_layers()
        .iter()
        .zip(ratios)
        .map(|(layer, &r)| mask_from_sparsity(&filter_norms(&layer.weight, norm), r))
        .collect()
}

fn check_masks(net: &Network, masks: &[Mask]) -> Result<()> {
    if masks.len() != net.depth() {
        return Err(Error::MaskCount {
            expected: net.depth(),
            got: masks.len(),
        });
    }
    for (layer, m) in net.conv_layers().iter().zip(masks) {
        if m.len() != layer.spec.num_filters {
            return Err(Error::MaskLength {
                layer: layer.spec.index,
                expected: layer.spec.num_filters,
                got: m.len(),
            });
        }
    }
    Ok(())
}

/// Live filter counts per conv layer and live input channels feeding each.
fn live_counts(net: &Network, masks: &[Mask]) -> Vec<(usize, usize)> {
    let mut live_in = net.input_shape()[0];
    masks
        .iter()
        .map(|m| {
            let pair = (m.kept(), live_in);
            live_in = m.kept();
            pair
        })
        .collect()
}

/// Parameters that survive the masks.
pub fn remaining_params(net: &Network, masks: &[Mask]) -> Result<usize> {
    check_masks(net, masks)?;
    let mut total = 0;
    for (layer, (filters, inputs)) in net.conv_layers().iter().zip(live_counts(net, masks)) {
        let k = layer.spec.kernel_size;
        total += filters * (inputs * k * k + 1);
    }
    let last = *net.conv_geometry().last().expect("at least one conv layer");
    let live_features = masks.last().unwrap().kept() * last.out_positions();
    for (i, d) in net.head().layers.iter().enumerate() {
        let inputs = if i == 0 { live_features } else { d.inputs() };
        total += d.outputs() * (inputs + 1);
    }
    Ok(total)
}

/// `100 * remaining parameters / total parameters`.
pub fn remaining_param_fraction(net: &Network, masks: &[Mask]) -> Result<f64> {
    let kept = remaining_params(net, masks)?;
    Ok(100.0 * kept as f64 / net.param_count() as f64)
}

/// Multiply-accumulate operations per sample under the masks.
pub fn macs(net: &Network, masks: &[Mask]) -> Result<usize> {
    check_masks(net, masks)?;
    let geoms = net.conv_geometry();
    let mut total = 0;
    for (g, (filters, inputs)) in geoms.iter().zip(live_counts(net, masks)) {
        total += g.macs(filters, inputs);
    }
    let last = geoms.last().unwrap();
    let live_features = masks.last().unwrap().kept() * last.out_positions();
    for (i, d) in net.head().layers.iter().enumerate() {
        let inputs = if i == 0 { live_features } else { d.inputs() };
        total += d.outputs() * inputs;
    }
    Ok(total)
}

/// `100 * MACs(masked) / MACs(unmasked)`.
pub fn flops_fraction(net: &Network, masks: &[Mask]) -> Result<f64> {
    let full: Vec<Mask> = net.conv_layers().iter().map(|l| Mask::ones(l.spec.num_filters)).collect();
    let dense = macs(net, &full)?;
    Ok(100.0 * macs(net, masks)? as f64 / dense as f64)
}

/// What an external evaluator receives on stdin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostRequest {
    pub masks: Vec<Mask>,
    pub network: NetworkSummary,
    /// Size of the reward batch `B`, when the cost is evaluated inside an episode.
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub param_count: usize,
    pub remaining_params: usize,
    pub macs: usize,
    pub remaining_macs: usize,
}

impl NetworkSummary {
    pub fn new(net: &Network, masks: &[Mask]) -> Result<Self> {
        let full: Vec<Mask> = net.conv_layers().iter().map(|l| Mask::ones(l.spec.num_filters)).collect();
        Ok(Self {
            input_shape: net.input_shape(),
            layers: net.layer_specs(),
            param_count: net.param_count(),
            remaining_params: remaining_params(net, masks)?,
            macs: macs(net, &full)?,
            remaining_macs: macs(net, masks)?,
        })
    }
}

/// The budgeted quantity `f`. Built-ins ignore the batch; external commands
/// may be arbitrary, non-differentiable programs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "command")]
pub enum CostFunction {
    ParamFraction,
    FlopsFraction,
    /// Shell command reading a [`CostRequest`] JSON on stdin and printing one
    /// non-negative number.
    External(String),
}

impl Default for CostFunction {
    fn default() -> Self {
        CostFunction::ParamFraction
    }
}

impl std::str::FromStr for CostFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "param_fraction" => Ok(CostFunction::ParamFraction),
            "flops_fraction" => Ok(CostFunction::FlopsFraction),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(CostFunction::External(cmd.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown cost function {s:?}; expected param_fraction, flops_fraction or external:CMD"
                ))),
            },
        }
    }
}

impl std::fmt::Display for CostFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostFunction::ParamFraction => f.write_str("param_fraction"),
            CostFunction::FlopsFraction => f.write_str("flops_fraction"),
            CostFunction::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

impl CostFunction {
    pub fn evaluate(&self, net: &Network, masks: &[Mask], batch_size: Option<usize>) -> Result<f64> {
        match self {
            CostFunction::ParamFraction => remaining_param_fraction(net, masks),
            CostFunction::FlopsFraction => flops_fraction(net, masks),
            CostFunction::External(cmd) => {
                let request = CostRequest {
                    masks: masks.to_vec(),
                    network: NetworkSummary::new(net, masks)?,
                    batch_size,
                };
                run_external(cmd, &serde_json::to_vec(&request)?)
            }
        }
    }
}

fn run_external(cmd: &str, input: &[u8]) -> Result<f64> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::ExternalCost(format!("cannot spawn {cmd:?}: {e}")))?;
    {
        let mut stdin = child.stdin.take().expect("stdin is piped");
        // a command that exits without reading stdin is not an error by itself
        let _ = stdin.write_all(input);
    }
    let out = child.wait_with_output()?;
    if !out.status.success() {
        return Err(Error::ExternalCost(format!(
            "{cmd:?} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::ExternalCost(format!("{cmd:?} printed {:?}, expected one number", text.trim())))?;
    if !value.is_finite() || value < 0.0 {
        return Err(Error::ExternalCost(format!("{cmd:?} returned {value}; costs must be finite and >= 0")));
    }
    Ok(value)
}
