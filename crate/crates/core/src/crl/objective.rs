//! Advantage estimates, the clipped Lagrangian surrogate and the TD value
//! losses.

use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use crate::error::{Error, Result};
use crate::policy::{GaussianPolicy, ValueNet};
use crate::tensor::Tensor;

/// Which value estimate is subtracted from the return-to-go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// `V(s_{t+1})`, zero after the terminal step.
    #[default]
    NextState,
    /// `V(s_t)`.
    CurrentState,
}

/// Per-step advantages in buffer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub reward: Vec<f64>,
    pub cost: Vec<f64>,
}

/// Discounted sum of `signal` from each step to the end of its episode, minus
/// the baseline.
fn advantage_of(buffer: &RolloutBuffer, value: &ValueNet, gamma: f64, baseline: Baseline, signal: impl Fn(&super::Transition) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(buffer.len());
    for ep in &buffer.episodes {
        let mut to_go = vec![0.0; ep.len()];
        let mut acc = 0.0;
        for (t, tr) in ep.transitions.iter().enumerate().rev() {
            acc = signal(tr) + gamma * acc;
            to_go[t] = acc;
        }
        for (tr, g) in ep.transitions.iter().zip(to_go) {
            let b = match baseline {
                Baseline::NextState if tr.done => 0.0,
                Baseline::NextState => value.predict(tr.next_state.as_slice()),
                Baseline::CurrentState => value.predict(tr.state.as_slice()),
            };
            out.push(g - b);
        }
    }
    out
}

/// `J^r_t = sum_{t' >= t} gamma^{t'-t} r_{t'} - V^r(.)` and likewise `J^c`
/// with costs; reward and cost share one code path.
pub fn compute_advantages(buffer: &RolloutBuffer, value_reward: &ValueNet, value_cost: &ValueNet, gamma: f64, baseline: Baseline) -> Advantages {
    Advantages {
        reward: advantage_of(buffer, value_reward, gamma, baseline, |t| t.reward),
        cost: advantage_of(buffer, value_cost, gamma, baseline, |t| t.cost),
    }
}

/// Inputs of the Lagrangian surrogate that do not depend on the policy.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateTerms<'a> {
    pub advantages: &'a Advantages,
    pub behaviour_log_probs: &'a [f64],
    pub lambda: f64,
    /// Budget in the units of the cost advantages.
    pub budget: f64,
    pub clip: f64,
}

/// Value and derivative of one clipped term `min(rho*A, clip(rho)*A)`
/// with respect to `rho`.
pub fn clipped_term(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

fn check_ratio(ratio: f64, i: usize) -> Result<()> {
    if ratio.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("importance ratio {ratio} at transition {i}")))
    }
}

/// `J = mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) + lambda * alpha`
/// with `A_i = J^r_i - lambda J^c_i`. At `rho = 1` this equals
/// `mean J^r - lambda (mean J^c - alpha)`.
pub fn lagrangian_objective(policy: &GaussianPolicy, buffer: &RolloutBuffer, terms: &SurrogateTerms) -> Result<f64> {
    let (states, actions) = buffer.states_actions();
    let n = buffer.len();
    let logps = policy.log_prob_batch(&states, &actions, n);
    let mut total = 0.0;
    for i in 0..n {
        let ratio = (logps[i] - terms.behaviour_log_probs[i]).exp();
        check_ratio(ratio, i)?;
        let adv = combined(terms, i);
        total += clipped_term(ratio, adv, terms.clip).0;
    }
    Ok(total / n as f64 + terms.lambda * terms.budget)
}

fn combined(terms: &SurrogateTerms, i: usize) -> f64 {
    terms.advantages.reward[i] - terms.lambda * terms.advantages.cost[i]
}

/// The negated objective (a loss to descend) and its gradient with respect to
/// the policy parameters.
pub fn lagrangian_loss_grad(policy: &GaussianPolicy, buffer: &RolloutBuffer, terms: &SurrogateTerms) -> Result<(f64, Vec<Tensor>)> {
    let (states, actions) = buffer.states_actions();
    let n = buffer.len();
    if terms.behaviour_log_probs.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("behaviour log-probability".into()));
    }
    let mut objective = 0.0;
    let mut ratio_err = None;
    let (_, grads) = policy.log_prob_grad(&states, &actions, n, |logps| {
        (0..n)
            .map(|i| {
                let ratio = (logps[i] - terms.behaviour_log_probs[i]).exp();
                if let Err(e) = check_ratio(ratio, i) {
                    ratio_err.get_or_insert(e);
                    return 0.0;
                }
                let (value, d_ratio) = clipped_term(ratio, combined(terms, i), terms.clip);
                objective += value;
                // d(-J)/d(log pi) = -(dJ/d rho) * rho / n
                -d_ratio * ratio / n as f64
            })
            .collect()
    });
    if let Some(e) = ratio_err {
        return Err(e);
    }
    let objective = objective / n as f64 + terms.lambda * terms.budget;
    Ok((-objective, grads))
}

/// `L = sum_t (x_t + gamma V(s_{t+1}) - V(s_t))^2` with `V(s_{T+1}) = 0`,
/// and its full gradient (through both `V(s_t)` and `V(s_{t+1})`).
pub fn value_loss_grad(value: &ValueNet, buffer: &RolloutBuffer, use_cost: bool) -> (f64, Vec<Tensor>) {
    let n = buffer.len();
    let dim = value.net.inputs();
    let mut states = Vec::with_capacity(2 * n * dim);
    for t in buffer.transitions() {
        states.extend_from_slice(t.state.as_slice());
    }
    for t in buffer.transitions() {
        states.extend_from_slice(t.next_state.as_slice());
    }
    let v = value.predict_batch(&states, 2 * n);
    let gamma = value.discount;
    let mut coef = vec![0.0; 2 * n];
    let mut loss = 0.0;
    for (i, t) in buffer.transitions().enumerate() {
        let target = if use_cost { t.cost } else { t.reward };
        let next = if t.done { 0.0 } else { gamma * v[n + i] };
        let delta = target + next - v[i];
        loss += delta * delta;
        coef[i] = -2.0 * delta;
        if !t.done {
            coef[n + i] = 2.0 * gamma * delta;
        }
    }
    let grads = value.weighted_grad(&states, 2 * n, &coef);
    (loss, grads)
}

/// Reward-to-go loss value only; see [`value_loss_grad`].
pub fn value_loss(value: &ValueNet, buffer: &RolloutBuffer, use_cost: bool) -> f64 {
    value_loss_grad(value, buffer, use_cost).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_formula_direct_evaluation() {
        assert_eq!(clipped_term(1.5, 1.0, 0.2).0, 1.2);
        assert_eq!(clipped_term(1.5, 1.0, 0.2).1, 0.0);
        // negative advantage keeps the pessimistic unclipped branch
        assert_eq!(clipped_term(1.5, -1.0, 0.2), (-1.5, -1.0));
        assert_eq!(clipped_term(1.0, 2.0, 0.2), (2.0, 2.0));
        assert_eq!(clipped_term(0.5, -1.0, 0.2), (-0.8, 0.0));
    }
}
