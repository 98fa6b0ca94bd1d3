//! PPO-Lagrangian training: rollout collection into a buffer, reward and
//! cost advantages, the clipped Lagrangian surrogate, and the updates of the
//! policy, the multiplier and both value networks.

mod buffer;
mod objective;
mod trainer;

pub use buffer::{Episode, Normalizer, RolloutBuffer, Transition};
pub use objective::{
    clipped_term, compute_advantages, lagrangian_loss_grad, lagrangian_objective, value_loss, value_loss_grad, Advantages, Baseline,
    SurrogateTerms,
};
pub use trainer::{
    collect_rollouts, update_lambda, EpisodeLog, GreedyOutcome, IterationLog, LagrangeState, PpoConfig, TrainReport, Trainer,
};
