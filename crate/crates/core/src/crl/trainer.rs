use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{Episode, Normalizer, RolloutBuffer, Transition};
use super::objective::{compute_advantages, lagrangian_loss_grad, value_loss_grad, Advantages, Baseline, SurrogateTerms};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::policy::{GaussianPolicy, ValueNet};
use crate::rng::{derive_seed, rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Clip range `epsilon`.
    pub clip: f64,
    pub policy_lr: f64,
    pub lambda_lr: f64,
    pub value_reward_lr: f64,
    pub value_cost_lr: f64,
    /// Policy gradient steps over the buffer per iteration.
    pub epochs: usize,
    /// Descent steps on each value network per iteration.
    pub value_steps: usize,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Discount inside the return-to-go of the advantages.
    pub gamma: f64,
    /// TD discounts of the reward and cost value networks.
    pub gamma_reward: f64,
    pub gamma_cost: f64,
    pub initial_lambda: f64,
    pub normalize: bool,
    pub baseline: Baseline,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Rollout worker threads; results do not depend on this value.
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            policy_lr: 3e-4,
            lambda_lr: 3e-4,
            value_reward_lr: 3e-4,
            value_cost_lr: 3e-4,
            epochs: 10,
            value_steps: 10,
            iterations: 30,
            episodes_per_iteration: 8,
            gamma: 1.0,
            gamma_reward: 0.99,
            gamma_cost: 1.0,
            initial_lambda: 1.0,
            normalize: true,
            baseline: Baseline::NextState,
            hidden: vec![64, 64],
            init_log_std: 0.5f64.ln(),
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if [self.policy_lr, self.lambda_lr, self.value_reward_lr, self.value_cost_lr]
            .iter()
            .any(|&lr| !(lr > 0.0))
        {
            return bad("all learning rates must be positive");
        }
        if self.iterations == 0 || self.episodes_per_iteration == 0 {
            return bad("iterations and episodes per iteration must be positive");
        }
        if self.initial_lambda < 0.0 || !self.initial_lambda.is_finite() {
            return bad("initial lambda must be finite and non-negative");
        }
        if self.hidden.is_empty() {
            return bad("policy needs at least one hidden layer");
        }
        Ok(())
    }
}

/// Lagrange multiplier with its budget and step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub lambda: f64,
    pub budget: f64,
    pub lr: f64,
}

impl LagrangeState {
    /// Projected ascent on the constraint residual:
    /// `lambda <- max(0, lambda + lr * (mean episode cost - budget))`.
    pub fn update(&mut self, mean_cost: f64) {
        self.lambda = (self.lambda + self.lr * (mean_cost - self.budget)).max(0.0);
    }
}

pub fn update_lambda(lag: &mut LagrangeState, buffer: &RolloutBuffer) {
    lag.update(buffer.mean_raw_cost());
}

/// Runs `episodes` complete episodes. Episode `e` draws its randomness from
/// `derive_seed(seed, [e])`, so the result is the same for any worker count.
pub fn collect_rollouts<E: Environment + Clone>(policy: &GaussianPolicy, env: &mut E, episodes: usize, seed: u64, workers: usize) -> Result<RolloutBuffer> {
    if episodes == 0 {
        return Err(Error::Config("episode count must be at least 1".into()));
    }
    let run = |env: &mut E, e: usize| run_episode(policy, env, derive_seed(seed, &[e as u64]));
    let episodes = if workers <= 1 {
        (0..episodes).map(|e| run(env, e)).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        let chunk = episodes.div_ceil(workers);
        let template = env.clone();
        let results: Vec<Result<Vec<Episode>>> = pool.install(|| {
            (0..workers)
                .into_par_iter()
                .map(|w| {
                    let mut local = template.clone();
                    (w * chunk..((w + 1) * chunk).min(episodes))
                        .map(|e| run(&mut local, e))
                        .collect()
                })
                .collect()
        });
        let mut all = Vec::with_capacity(episodes);
        for r in results {
            all.extend(r?);
        }
        all
    };
    Ok(RolloutBuffer { episodes })
}

fn run_episode<E: Environment>(policy: &GaussianPolicy, env: &mut E, seed: u64) -> Result<Episode> {
    let mut rng = rng_for(seed, stream::ROLLOUT);
    let mut state = env.reset(seed)?;
    let mut transitions = Vec::with_capacity(env.horizon());
    let mut log_probs = Vec::with_capacity(env.horizon());
    let mut applied = Vec::with_capacity(env.horizon());
    loop {
        let (action, lp) = policy.sample_action(state.as_slice(), &mut rng);
        applied.push(env.squash(action[0]));
        let out = env.step(&action)?;
        log_probs.push(lp);
        let done = out.done;
        transitions.push(Transition {
            state,
            action,
            next_state: out.state.clone(),
            reward: out.reward,
            cost: out.cost,
            done,
        });
        if done {
            break;
        }
        state = out.state;
    }
    let last = transitions.last().expect("at least one step");
    Ok(Episode {
        raw_reward: last.reward,
        raw_cost: last.cost,
        transitions,
        log_probs,
        applied,
    })
}

/// Per-iteration training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_cost: f64,
    /// Multiplier after this iteration's update.
    pub lambda: f64,
    /// Mean applied action over all steps.
    pub mean_sparsity: f64,
    pub value_loss_reward: f64,
    pub value_loss_cost: f64,
    pub policy_std: f64,
    pub episodes: Vec<EpisodeLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub raw_actions: Vec<f64>,
    pub applied: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
}

/// The deterministic (mean-action) episode run after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub raw_actions: Vec<f64>,
    pub applied: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: Vec<IterationLog>,
    pub greedy: GreedyOutcome,
}

/// PPO-Lagrangian learner: policy, both value networks, their optimizers,
/// the multiplier and the reward/cost normalizers.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: PpoConfig,
    pub policy: GaussianPolicy,
    pub value_reward: ValueNet,
    pub value_cost: ValueNet,
    pub lagrange: LagrangeState,
    pub normalizer: Normalizer,
    policy_opt: Adam,
    value_reward_opt: Adam,
    value_cost_opt: Adam,
    seed: u64,
}

impl Trainer {
    pub fn new(config: PpoConfig, state_dim: usize, action_dim: usize, budget: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, stream::POLICY_INIT);
        let policy = GaussianPolicy::new(state_dim, action_dim, &config.hidden, config.init_log_std, &mut rng);
        let value_reward = ValueNet::new(state_dim, &config.hidden, config.gamma_reward, &mut rng);
        let value_cost = ValueNet::new(state_dim, &config.hidden, config.gamma_cost, &mut rng);
        Ok(Self {
            policy_opt: Adam::new(policy.params()),
            value_reward_opt: Adam::new(value_reward.params()),
            value_cost_opt: Adam::new(value_cost.params()),
            lagrange: LagrangeState {
                lambda: config.initial_lambda,
                budget,
                lr: config.lambda_lr,
            },
            normalizer: Normalizer::new(config.normalize),
            policy,
            value_reward,
            value_cost,
            config,
            seed,
        })
    }

    pub fn collect<E: Environment + Clone>(&mut self, env: &mut E, iteration: usize) -> Result<RolloutBuffer> {
        let seed = derive_seed(self.seed, &[iteration as u64]);
        let mut buffer = collect_rollouts(&self.policy, env, self.config.episodes_per_iteration, seed, self.config.workers)?;
        self.normalizer.apply(&mut buffer);
        Ok(buffer)
    }

    pub fn advantages(&self, buffer: &RolloutBuffer) -> Advantages {
        compute_advantages(buffer, &self.value_reward, &self.value_cost, self.config.gamma, self.config.baseline)
    }

    /// `epochs` Adam steps on the negated Lagrangian surrogate.
    pub fn update_policy(&mut self, buffer: &RolloutBuffer, advantages: &Advantages) -> Result<()> {
        let behaviour = buffer.log_probs();
        let terms = SurrogateTerms {
            advantages,
            behaviour_log_probs: &behaviour,
            lambda: self.lagrange.lambda,
            budget: self.normalizer.budget(self.lagrange.budget),
            clip: self.config.clip,
        };
        for _ in 0..self.config.epochs {
            let (_, grads) = lagrangian_loss_grad(&self.policy, buffer, &terms)?;
            self.policy_opt.update(&mut self.policy.params_mut(), &grads, self.config.policy_lr);
            self.policy.project();
        }
        Ok(())
    }

    /// `value_steps` Adam steps on each TD loss; returns the losses before the
    /// first step.
    pub fn update_value_nets(&mut self, buffer: &RolloutBuffer) -> (f64, f64) {
        let mut first = None;
        for _ in 0..self.config.value_steps.max(1) {
            let (lr, gr) = value_loss_grad(&self.value_reward, buffer, false);
            self.value_reward_opt
                .update(&mut self.value_reward.params_mut(), &gr, self.config.value_reward_lr);
            let (lc, gc) = value_loss_grad(&self.value_cost, buffer, true);
            self.value_cost_opt
                .update(&mut self.value_cost.params_mut(), &gc, self.config.value_cost_lr);
            first.get_or_insert((lr, lc));
        }
        first.unwrap()
    }

    /// One iteration: collect, advantages, policy epochs, multiplier, value nets.
    pub fn iterate<E: Environment + Clone>(&mut self, env: &mut E, iteration: usize) -> Result<IterationLog> {
        env.set_progress(iteration, self.config.iterations);
        let buffer = self.collect(env, iteration)?;
        let advantages = self.advantages(&buffer);
        self.update_policy(&buffer, &advantages)?;
        update_lambda(&mut self.lagrange, &buffer);
        let (value_loss_reward, value_loss_cost) = self.update_value_nets(&buffer);
        Ok(IterationLog {
            iteration,
            mean_reward: buffer.mean_raw_reward(),
            mean_cost: buffer.mean_raw_cost(),
            lambda: self.lagrange.lambda,
            mean_sparsity: buffer.mean_applied_action(),
            value_loss_reward,
            value_loss_cost,
            policy_std: self.policy.std()[0],
            episodes: buffer
                .episodes
                .iter()
                .map(|e| EpisodeLog {
                    raw_actions: e.transitions.iter().map(|t| t.action[0]).collect(),
                    applied: e.applied.clone(),
                    reward: e.raw_reward,
                    cost: e.raw_cost,
                })
                .collect(),
        })
    }

    /// Plays one episode with the mean action at every step.
    pub fn greedy<E: Environment>(&self, env: &mut E) -> Result<GreedyOutcome> {
        let mut state = env.reset(derive_seed(self.seed, &[u64::MAX]))?;
        let mut raw_actions = Vec::new();
        let mut applied = Vec::new();
        loop {
            let action = self.policy.mean_action(state.as_slice());
            raw_actions.push(action[0]);
            applied.push(env.squash(action[0]));
            let out = env.step(&action)?;
            if out.done {
                return Ok(GreedyOutcome {
                    raw_actions,
                    applied,
                    reward: out.reward,
                    cost: out.cost,
                });
            }
            state = out.state;
        }
    }

    /// Runs all configured iterations, then the greedy episode at the final
    /// training phase. `observe` sees each iteration's log as it completes.
    pub fn train<E: Environment + Clone>(&mut self, env: &mut E, mut observe: impl FnMut(&IterationLog)) -> Result<TrainReport> {
        let mut iterations = Vec::with_capacity(self.config.iterations);
        for i in 0..self.config.iterations {
            let log = self
                .iterate(env, i)
                .map_err(|e| Error::Iteration {
                    iteration: i,
                    source: Box::new(e),
                })?;
            observe(&log);
            iterations.push(log);
        }
        env.set_progress(self.config.iterations - 1, self.config.iterations);
        let greedy = self.greedy(env)?;
        Ok(TrainReport { iterations, greedy })
    }
}
