//! The four stages of an experiment. Each reads and writes files in the
//! configured output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use crlprune::checkpoint::{load_network, save_agent, save_network};
use crlprune::crl::Trainer;
use crlprune::data::Dataset;
use crlprune::env::{finetune, Environment, PruningEnv};
use crlprune::nn::{Adam, Mask, Network};
use crlprune::pruner::{flops_fraction, masks_from_ratios, remaining_param_fraction};
use crlprune::rng::{derive_seed, rng_for, stream};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{episode_rows, read_json, write_csv, write_json, IterationRow, TimingRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub steps: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasksFile {
    pub ratios: Vec<f64>,
    pub masks: Vec<Mask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub alpha: f64,
    pub cost_function: String,
    pub cost: f64,
    pub budget_met: bool,
    pub ratios: Vec<f64>,
    pub filters_kept: Vec<usize>,
    pub remaining_param_fraction: f64,
    /// `100 - remaining_param_fraction`.
    pub sparsity: f64,
    pub flops_fraction: f64,
    pub accuracy: f64,
    pub unpruned_accuracy: f64,
    /// `accuracy - unpruned_accuracy`, in points.
    pub delta_accuracy: f64,
    pub final_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub ratio: f64,
    /// The CRL remaining fraction the ratio was matched to, if any.
    pub matched_to: Option<f64>,
    pub cost: f64,
    pub filters_kept: Vec<usize>,
    pub remaining_param_fraction: f64,
    pub sparsity: f64,
    pub flops_fraction: f64,
    pub accuracy: f64,
    pub unpruned_accuracy: f64,
    pub delta_accuracy: f64,
}

fn note(quiet: bool, msg: impl FnOnce() -> String) {
    if !quiet {
        eprintln!("{}", msg());
    }
}

pub fn checkpoint_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("checkpoint.json")
}

/// Trains the target network from scratch and writes `checkpoint.json` and
/// `pretrain.json`.
pub fn pretrain(cfg: &ExperimentConfig, quiet: bool) -> Result<PretrainSummary> {
    cfg.validate()?;
    cfg.write_resolved()?;
    let (train, test) = cfg.dataset.load(cfg.seed).context("loading dataset")?;
    let mut net = Network::new(&cfg.architecture, &mut rng_for(cfg.seed, stream::INIT))?;
    let mut opt = Adam::new(net.params());
    let mut rng = rng_for(cfg.seed, stream::PRETRAIN);
    let mut loss = f64::NAN;
    for step in 0..cfg.pretrain.steps {
        let (x, y) = train.sample_batch(cfg.pretrain.batch_size, &mut rng);
        loss = net
            .train_step(&x, &y, &mut opt, cfg.pretrain.lr)
            .with_context(|| format!("pretraining diverged at step {step}"))?;
        if (step + 1) % 50 == 0 {
            note(quiet, || format!("pretrain step {:>5}  loss {loss:.4}", step + 1));
        }
    }
    let summary = PretrainSummary {
        steps: cfg.pretrain.steps,
        final_loss: loss,
        train_accuracy: net.evaluate(&train)?,
        test_accuracy: net.evaluate(&test)?,
    };
    note(quiet, || {
        format!("pretrained: train accuracy {:.4}, test accuracy {:.4}", summary.train_accuracy, summary.test_accuracy)
    });
    save_network(&checkpoint_path(cfg), &net)?;
    write_json(&cfg.out_dir.join("pretrain.json"), &summary)?;
    Ok(summary)
}

fn load_pretrained(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Network> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| checkpoint_path(cfg));
    load_network(&path).with_context(|| format!("loading pretrained checkpoint {}", path.display()))
}

/// Applies `masks` to a copy of `pretrained`, fine-tunes it with the final
/// budget and returns it with its test accuracy. CRL and baseline share the
/// fine-tuning stream so their results are comparable.
fn finetune_delivered(cfg: &ExperimentConfig, pretrained: &Network, masks: &[Mask], train: &Dataset, test: &Dataset) -> Result<(Network, f64)> {
    let mut net = pretrained.clone();
    net.apply_mask(masks)?;
    let mut rng = rng_for(derive_seed(cfg.seed, &[u64::MAX]), stream::FINETUNE);
    finetune(&mut net, train, cfg.final_finetune_steps, cfg.env.batch_size, cfg.env.finetune_lr, &mut rng)
        .context("final fine-tuning")?;
    let acc = net.evaluate(test)?;
    Ok((net, acc))
}

/// Trains the PPO-Lagrangian agent against the pretrained network and
/// delivers the greedy masks.
pub fn prune(cfg: &ExperimentConfig, checkpoint: Option<&Path>, quiet: bool) -> Result<PruneSummary> {
    cfg.validate()?;
    cfg.write_resolved()?;
    let pretrained = load_pretrained(cfg, checkpoint)?;
    let (train, test) = cfg.dataset.load(cfg.seed).context("loading dataset")?;
    let pretrained = Arc::new(pretrained);
    let train = Arc::new(train);
    let mut env = PruningEnv::new(pretrained.clone(), train.clone(), cfg.env.clone())?;
    let mut trainer = Trainer::new(cfg.ppo.clone(), env.state_dim(), env.action_dim(), cfg.alpha(), cfg.seed)?;

    let mut iterations = Vec::new();
    let mut episodes = Vec::new();
    let mut timing = Vec::new();
    let mut lambda_before = trainer.lagrange.lambda;
    let start = Instant::now();
    let report = trainer
        .train(&mut env, |log| {
            iterations.push(IterationRow::from(log));
            episodes.extend(episode_rows(log, lambda_before));
            lambda_before = log.lambda;
            timing.push(TimingRow {
                iter: log.iteration,
                wallclock_s: start.elapsed().as_secs_f64(),
            });
            note(quiet, || {
                format!(
                    "iter {:>4}  reward {:>9.4}  cost {:>7.2}  lambda {:.4}  sparsity {:.3}  std {:.3}",
                    log.iteration, log.mean_reward, log.mean_cost, log.lambda, log.mean_sparsity, log.policy_std
                )
            });
        })
        .context("training the pruning agent")?;
    let out = &cfg.out_dir;
    write_csv(&out.join("iterations.csv"), &iterations)?;
    write_csv(&out.join("episodes.csv"), &episodes)?;
    write_csv(&out.join("timing.csv"), &timing)?;
    save_agent(&out.join("agent.json"), &trainer)?;

    let greedy = report.greedy;
    let masks = masks_from_ratios(&pretrained, &greedy.applied, cfg.env.norm)?;
    let (delivered, accuracy) = finetune_delivered(cfg, &pretrained, &masks, &train, &test)?;
    let unpruned_accuracy = pretrained.evaluate(&test)?;
    let rpf = remaining_param_fraction(&pretrained, &masks)?;
    let summary = PruneSummary {
        alpha: cfg.alpha(),
        cost_function: cfg.env.cost.to_string(),
        cost: greedy.cost,
        budget_met: greedy.cost <= cfg.alpha(),
        ratios: greedy.applied.clone(),
        filters_kept: masks.iter().map(Mask::kept).collect(),
        remaining_param_fraction: rpf,
        sparsity: 100.0 - rpf,
        flops_fraction: flops_fraction(&pretrained, &masks)?,
        accuracy,
        unpruned_accuracy,
        delta_accuracy: 100.0 * (accuracy - unpruned_accuracy),
        final_lambda: trainer.lagrange.lambda,
    };
    write_json(&out.join("masks.json"), &MasksFile { ratios: greedy.applied, masks })?;
    save_network(&out.join("pruned.json"), &delivered)?;
    write_json(&out.join("summary.json"), &summary)?;
    note(quiet, || {
        format!(
            "delivered: cost {:.2} (alpha {}), sparsity {:.2}%, accuracy {:.4} ({:+.2} points)",
            summary.cost, summary.alpha, summary.sparsity, summary.accuracy, summary.delta_accuracy
        )
    });
    Ok(summary)
}

/// The uniform ratio whose remaining parameter fraction is closest to
/// `target`, searched on a 0.001 grid; ties go to the smaller ratio.
pub fn matched_ratio(net: &Network, target: f64, max_ratio: f64, norm: crlprune::pruner::NormKind) -> Result<f64> {
    let mut best = (f64::INFINITY, 0.0);
    let steps = (max_ratio * 1000.0).floor() as usize;
    for i in 0..=steps {
        let r = i as f64 / 1000.0;
        let masks = masks_from_ratios(net, &vec![r; net.depth()], norm)?;
        let gap = (remaining_param_fraction(net, &masks)? - target).abs();
        if gap < best.0 {
            best = (gap, r);
        }
    }
    Ok(best.1)
}

/// Uniform per-layer magnitude pruning at `ratio`, or at the ratio matching
/// the CRL run's remaining parameters when `ratio` is `None`.
pub fn baseline(cfg: &ExperimentConfig, checkpoint: Option<&Path>, ratio: Option<f64>, quiet: bool) -> Result<BaselineSummary> {
    cfg.validate()?;
    cfg.write_resolved()?;
    let pretrained = load_pretrained(cfg, checkpoint)?;
    let (train, test) = cfg.dataset.load(cfg.seed).context("loading dataset")?;
    let (ratio, matched_to) = match ratio {
        Some(r) => {
            if !(0.0..1.0).contains(&r) {
                bail!("baseline ratio must lie in [0, 1), got {r}");
            }
            (r, None)
        }
        None => {
            let crl: PruneSummary = read_json(&cfg.out_dir.join("summary.json"))
                .context("no ratio given and no CRL summary to match; run `prune` first or pass --ratio")?;
            let target = crl.remaining_param_fraction;
            (matched_ratio(&pretrained, target, cfg.env.max_sparsity, cfg.env.norm)?, Some(target))
        }
    };
    let masks = masks_from_ratios(&pretrained, &vec![ratio; pretrained.depth()], cfg.env.norm)?;
    let (_, accuracy) = finetune_delivered(cfg, &pretrained, &masks, &train, &test)?;
    let unpruned_accuracy = pretrained.evaluate(&test)?;
    let rpf = remaining_param_fraction(&pretrained, &masks)?;
    let summary = BaselineSummary {
        ratio,
        matched_to,
        cost: cfg.env.cost.evaluate(&pretrained, &masks, Some(cfg.env.batch_size))?,
        filters_kept: masks.iter().map(Mask::kept).collect(),
        remaining_param_fraction: rpf,
        sparsity: 100.0 - rpf,
        flops_fraction: flops_fraction(&pretrained, &masks)?,
        accuracy,
        unpruned_accuracy,
        delta_accuracy: 100.0 * (accuracy - unpruned_accuracy),
    };
    write_json(&cfg.out_dir.join("baseline.json"), &summary)?;
    note(quiet, || {
        format!(
            "baseline: ratio {ratio:.3}, sparsity {:.2}%, accuracy {:.4} ({:+.2} points)",
            summary.sparsity, summary.accuracy, summary.delta_accuracy
        )
    });
    Ok(summary)
}

/// Renders whatever summaries exist in the output directory as a text table.
pub fn report(out_dir: &Path) -> Result<String> {
    let mut lines = vec![format!("run: {}", out_dir.display())];
    let pre = out_dir.join("pretrain.json");
    if pre.exists() {
        let p: PretrainSummary = read_json(&pre)?;
        lines.push(format!(
            "pretrained    train acc {:.4}  test acc {:.4}  ({} steps)",
            p.train_accuracy, p.test_accuracy, p.steps
        ));
    }
    let crl = out_dir.join("summary.json");
    let base = out_dir.join("baseline.json");
    if !crl.exists() && !base.exists() && !pre.exists() {
        bail!("no results found in {}", out_dir.display());
    }
    lines.push(format!("{:<10} {:>10} {:>10} {:>10} {:>10} {:>8}", "method", "sparsity%", "flops%", "cost", "accuracy", "dAcc"));
    if crl.exists() {
        let s: PruneSummary = read_json(&crl)?;
        lines.push(format!(
            "{:<10} {:>10.2} {:>10.2} {:>10.3} {:>10.4} {:>+8.2}",
            "crl", s.sparsity, s.flops_fraction, s.cost, s.accuracy, s.delta_accuracy
        ));
        lines.push(format!(
            "           alpha {} ({}), budget {}, ratios {:?}",
            s.alpha,
            s.cost_function,
            if s.budget_met { "met" } else { "VIOLATED" },
            s.ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ));
    }
    if base.exists() {
        let b: BaselineSummary = read_json(&base)?;
        lines.push(format!(
            "{:<10} {:>10.2} {:>10.2} {:>10.3} {:>10.4} {:>+8.2}",
            "magnitude", b.sparsity, b.flops_fraction, b.cost, b.accuracy, b.delta_accuracy
        ));
    }
    Ok(lines.join("\n"))
}
