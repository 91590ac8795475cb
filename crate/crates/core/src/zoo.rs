//! Small diagnostic MDPs with known structure.

use crate::error::Result;
use crate::graph::AgentGraph;
use crate::mdp::TabularFactoredMdp;
use crate::rng::{stream, tag};
use crate::scalar::Scalar;

/// Seed of the random three-agent chain instance.
pub const CHAIN3_SEED: u64 = 2024;

/// One state, two actions, rewards `(1, 0)`, `gamma = 0.5`.
pub fn bandit<S: Scalar>() -> Result<TabularFactoredMdp<S>> {
    TabularFactoredMdp::new(
        AgentGraph::isolated(1)?,
        vec![1],
        vec![2],
        vec![vec![vec![S::one()], vec![S::one()]]],
        vec![vec![S::one(), S::zero()]],
        vec![(vec![0], S::one())],
        S::of(0.5),
        S::one(),
    )
}

/// Two states, actions stay/move; a move succeeds with probability 0.9 and
/// costs 0.1, and state 1 pays 1 per step. Starts in state 0, `gamma = 0.9`.
pub fn two_state_chain<S: Scalar>() -> Result<TabularFactoredMdp<S>> {
    let p = |x: f64| S::of(x);
    let kernels = vec![vec![
        vec![p(1.0), p(0.0)], // s=0, stay
        vec![p(0.1), p(0.9)], // s=0, move
        vec![p(0.0), p(1.0)], // s=1, stay
        vec![p(0.9), p(0.1)], // s=1, move
    ]];
    let rewards = vec![vec![p(0.0), p(-0.1), p(1.0), p(0.9)]];
    TabularFactoredMdp::new(
        AgentGraph::isolated(1)?,
        vec![2],
        vec![2],
        kernels,
        rewards,
        vec![(vec![0], S::one())],
        S::of(0.9),
        S::one(),
    )
}

/// Three agents on a chain, two local states and actions, random kernels
/// and local rewards in `[-1, 1]` drawn from a fixed seed, `gamma = 0.9`.
pub fn three_agent_chain<S: Scalar>() -> Result<TabularFactoredMdp<S>> {
    random_chain(3, 2, 2, S::of(0.9), CHAIN3_SEED)
}

/// Random chain-graph instance.
pub fn random_chain<S: Scalar>(
    n_agents: usize,
    n_states: usize,
    n_actions: usize,
    gamma: S,
    seed: u64,
) -> Result<TabularFactoredMdp<S>> {
    let mut rng = stream(seed, &[tag::DIAGNOSTIC]);
    TabularFactoredMdp::random(AgentGraph::chain(n_agents)?, n_states, n_actions, gamma, &mut rng)
}
