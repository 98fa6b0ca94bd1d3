use super::{Environment, StateVec, StepOutcome};
use crate::error::{Error, Result};

/// One-step CMDP with reward `-(a - peak)^2` and cost `a`. Under the budget
/// `a <= alpha` with `alpha < peak`, the constrained optimum is `a* = alpha`.
#[derive(Debug, Clone)]
pub struct QuadraticCmdp {
    pub peak: f64,
    done: bool,
}

impl QuadraticCmdp {
    pub fn new(peak: f64) -> Self {
        Self { peak, done: true }
    }

    pub fn state() -> StateVec {
        StateVec(vec![1.0])
    }
}

impl Default for QuadraticCmdp {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl Environment for QuadraticCmdp {
    fn state_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Result<StateVec> {
        self.done = false;
        Ok(Self::state())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let a = action[0];
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("action {a}")));
        }
        self.done = true;
        Ok(StepOutcome {
            state: StateVec::zeros(1),
            reward: -(a - self.peak).powi(2),
            cost: a,
            done: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_reward_and_cost() {
        let mut env = QuadraticCmdp::default();
        env.reset(0).unwrap();
        let out = env.step(&[0.25]).unwrap();
        assert!(out.done);
        assert_eq!(out.reward, -0.5625);
        assert_eq!(out.cost, 0.25);
        assert!(matches!(env.step(&[0.0]), Err(Error::EpisodeDone)));
    }
}
