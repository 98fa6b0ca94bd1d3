//! Fixtures shared by the criterion benchmarks in `benches/`.

use crlprune::crl::{Advantages, Episode, RolloutBuffer, Transition};
use crlprune::data::{Dataset, SyntheticSpec};
use crlprune::env::StateVec;
use crlprune::policy::GaussianPolicy;
use crlprune::rng::{rng_for, stream};
use crlprune::{Architecture, Network};

/// The default toy network and its synthetic training split.
pub fn toy_network() -> (Network, Dataset) {
    let net = Network::new(&Architecture::default(), &mut rng_for(0, stream::INIT)).expect("default architecture is valid");
    let (train, _) = SyntheticSpec::default().generate(0).expect("default dataset is valid");
    (net, train)
}

/// A policy and a buffer of `episodes` three-step episodes with unit advantages.
pub fn rollout_fixture(episodes: usize) -> (GaussianPolicy, RolloutBuffer, Advantages) {
    let policy = GaussianPolicy::new(6, 1, &[64, 64], 0.5f64.ln(), &mut rng_for(0, stream::POLICY_INIT));
    let state = |t: usize| StateVec(vec![t as f64 / 3.0, 0.5, 0.5, 1.0, 1.0, 1.0]);
    let buffer = RolloutBuffer {
        episodes: (0..episodes)
            .map(|e| {
                let transitions: Vec<Transition> = (1..=3)
                    .map(|t| Transition {
                        state: state(t),
                        action: vec![0.1 * (e % 7) as f64 + 0.05 * t as f64],
                        next_state: if t < 3 { state(t + 1) } else { StateVec::zeros(6) },
                        reward: if t == 3 { -0.3 } else { 0.0 },
                        cost: if t == 3 { 40.0 } else { 0.0 },
                        done: t == 3,
                    })
                    .collect();
                Episode {
                    log_probs: transitions.iter().map(|tr| policy.log_prob(tr.state.as_slice(), &tr.action)).collect(),
                    applied: transitions.iter().map(|tr| tr.action[0]).collect(),
                    raw_reward: -0.3,
                    raw_cost: 40.0,
                    transitions,
                }
            })
            .collect(),
    };
    let n = buffer.len();
    let adv = Advantages { reward: vec![1.0; n], cost: vec![0.5; n] };
    (policy, buffer, adv)
}
