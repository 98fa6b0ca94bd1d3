//! Experiment driver for budget-constrained pruning: pretrain a target
//! network, train the pruning agent, compare with uniform magnitude pruning
//! and summarize the results.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{DatasetConfig, ExperimentConfig, Overrides, PretrainConfig};
pub use experiment::{baseline, pretrain, prune, report, BaselineSummary, PretrainSummary, PruneSummary};
