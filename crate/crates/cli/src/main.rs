use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use crlprune::pruner::CostFunction;
use crlprune_cli::{ExperimentConfig, Overrides};

/// Prune a small CNN under a computational budget with a PPO-Lagrangian agent.
#[derive(Parser, Debug)]
#[command(name = "crlprune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the target network and write checkpoint.json.
    Pretrain(Common),
    /// Train the pruning agent and deliver masks; exits 2 if the budget is missed.
    Prune {
        #[command(flatten)]
        common: Common,
        /// Pretrained checkpoint (default: OUT/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Uniform magnitude pruning at a given ratio or matched to the CRL run.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Per-layer sparsity ratio; matched to OUT/summary.json when omitted.
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Print the results found in an output directory.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Budget in percent of the unpruned cost.
    #[arg(long)]
    alpha: Option<f64>,
    /// param_fraction, flops_fraction or external:CMD.
    #[arg(long)]
    cost: Option<CostFunction>,
    /// Rollout worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            alpha: self.alpha,
            cost: self.cost.clone(),
            workers: self.workers,
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Pretrain(c) => {
            crlprune_cli::pretrain(&c.resolve()?, c.quiet)?;
        }
        Command::Prune { common, checkpoint } => {
            let summary = crlprune_cli::prune(&common.resolve()?, checkpoint.as_deref(), common.quiet)?;
            if !summary.budget_met {
                eprintln!("budget violated: cost {} > alpha {}", summary.cost, summary.alpha);
                return Ok(false);
            }
        }
        Command::Baseline { common, checkpoint, ratio } => {
            crlprune_cli::baseline(&common.resolve()?, checkpoint.as_deref(), ratio, common.quiet)?;
        }
        Command::Report(c) => println!("{}", crlprune_cli::report(&c.resolve()?.out_dir)?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
