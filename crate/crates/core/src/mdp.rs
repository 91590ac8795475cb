//! Factored networked MDPs.
//!
//! A global state is a vector of per-agent local state indices, and likewise
//! for actions. Each agent's next local state depends on the current states
//! of its closed one-hop neighborhood and on its own action; the global
//! transition is the product of these local kernels.
//!
//! Rewards are emitted per agent from the transition `(s, a, s')` together
//! with an explicit per-episode bookkeeping value (first-visit flags,
//! remaining prey, ...). Environments whose bookkeeping is `()` have rewards
//! that are Markov in `(s, a, s')` and can be solved exactly by the oracle.

use std::fmt::Debug;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::AgentGraph;
use crate::scalar::Scalar;

/// Default cap on the number of enumerated joint states or actions.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

pub trait FactoredMdp<S: Scalar>: Send + Sync {
    /// Episodic side state that restores the Markov property of the rewards.
    type Bookkeeping: Clone + Debug + Send + Sync;

    fn graph(&self) -> &AgentGraph;

    fn n_agents(&self) -> usize {
        self.graph().n_agents()
    }

    fn n_states(&self, agent: usize) -> usize;

    fn n_actions(&self, agent: usize) -> usize;

    /// Size of the local observation space the agent's policy is indexed by.
    fn n_observations(&self, agent: usize) -> usize {
        self.n_states(agent)
    }

    /// Maps a local state to the observation the agent's policy conditions on.
    fn observe(&self, _agent: usize, local_state: usize) -> usize {
        local_state
    }

    fn gamma(&self) -> S;

    /// Declared bound `R` with `|r_i| <= R` for every emitted reward.
    fn reward_bound(&self) -> S;

    /// Support of the initial distribution with probabilities.
    fn initial_distribution(&self) -> Vec<(Vec<usize>, S)>;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let dist = self.initial_distribution();
        if dist.len() == 1 {
            return dist[0].0.clone();
        }
        let u = S::of(rng.random::<f64>());
        let mut acc = S::zero();
        for (state, p) in &dist {
            acc = acc + *p;
            if u < acc {
                return state.clone();
            }
        }
        dist.last().map(|(s, _)| s.clone()).unwrap_or_default()
    }

    /// Local kernel `P_i(. | s_{N_i}, a_i)` as `(next_local_state, probability)`
    /// pairs with distinct states and positive probabilities.
    fn transition(&self, agent: usize, state: &[usize], action: usize) -> Vec<(usize, S)>;

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        agent: usize,
        state: &[usize],
        action: usize,
        rng: &mut R,
    ) -> usize {
        let dist = self.transition(agent, state, action);
        sample_categorical_pairs(&dist, rng)
    }

    fn begin_episode(&self, initial: &[usize]) -> Self::Bookkeeping;

    /// Writes every agent's reward for the transition `state -> next` into `out`.
    fn rewards(
        &self,
        state: &[usize],
        action: &[usize],
        next: &[usize],
        book: &Self::Bookkeeping,
        out: &mut [S],
    );

    /// Updates the bookkeeping after rewards for `state -> next` were emitted.
    fn advance(&self, book: &mut Self::Bookkeeping, state: &[usize], action: &[usize], next: &[usize]);
}

pub(crate) fn sample_categorical_pairs<S: Scalar, R: Rng + ?Sized>(dist: &[(usize, S)], rng: &mut R) -> usize {
    if dist.len() == 1 {
        return dist[0].0;
    }
    let u = S::of(rng.random::<f64>());
    let mut acc = S::zero();
    for &(s, p) in dist {
        acc = acc + p;
        if u < acc {
            return s;
        }
    }
    dist.last().map(|&(s, _)| s).unwrap_or(0)
}

/// Checks that `state` and `action` lie in the MDP's local spaces.
pub fn validate_joint<S: Scalar, M: FactoredMdp<S> + ?Sized>(
    mdp: &M,
    state: &[usize],
    action: &[usize],
) -> Result<()> {
    let n = mdp.n_agents();
    if state.len() != n || action.len() != n {
        return Err(Error::arg(format!(
            "expected {n} state and action components, got {} and {}",
            state.len(),
            action.len()
        )));
    }
    for i in 0..n {
        if state[i] >= mdp.n_states(i) {
            return Err(Error::arg(format!(
                "agent {i} state {} outside 0..{}",
                state[i],
                mdp.n_states(i)
            )));
        }
        if action[i] >= mdp.n_actions(i) {
            return Err(Error::arg(format!(
                "agent {i} action {} outside 0..{}",
                action[i],
                mdp.n_actions(i)
            )));
        }
    }
    Ok(())
}

/// Draws the next global state, each agent independently from its local kernel.
pub fn step<S: Scalar, M: FactoredMdp<S>, R: Rng + ?Sized>(
    mdp: &M,
    state: &[usize],
    action: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    validate_joint(mdp, state, action)?;
    Ok((0..mdp.n_agents())
        .map(|i| mdp.sample_transition(i, state, action[i], rng))
        .collect())
}

/// Mixed-radix indexing of a product space; the first agent is most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointIndexer {
    radices: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl JointIndexer {
    pub fn new(radices: Vec<usize>, what: &'static str, cap: u128) -> Result<Self> {
        let mut size: Option<u128> = Some(1);
        for &r in &radices {
            size = size.and_then(|s| s.checked_mul(r as u128));
        }
        match size {
            Some(s) if s <= cap => {}
            Some(s) => {
                return Err(Error::Capacity { what, size: s.to_string(), cap });
            }
            None => {
                let approx: f64 = radices.iter().map(|&r| (r as f64).log10()).sum();
                return Err(Error::Capacity { what, size: format!("~1e{approx:.1}"), cap });
            }
        }
        let mut strides = vec![1; radices.len()];
        for i in (0..radices.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * radices[i + 1];
        }
        let len = radices.iter().product();
        Ok(Self { radices, strides, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn index(&self, components: &[usize]) -> usize {
        components.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&s| {
                let c = index / s;
                index %= s;
                c
            })
            .collect()
    }

    pub fn stride(&self, agent: usize) -> usize {
        self.strides[agent]
    }
}

/// Lexicographic enumeration of the joint state and action spaces.
#[derive(Debug, Clone)]
pub struct JointSpace {
    pub states: JointIndexer,
    pub actions: JointIndexer,
}

impl JointSpace {
    pub fn state_list(&self) -> Vec<Vec<usize>> {
        (0..self.states.len()).map(|k| self.states.decode(k)).collect()
    }

    pub fn action_list(&self) -> Vec<Vec<usize>> {
        (0..self.actions.len()).map(|k| self.actions.decode(k)).collect()
    }
}

/// Enumerates `prod S_i` and `prod A_i`, failing when either exceeds `cap`.
pub fn enumerate_joint<S: Scalar, M: FactoredMdp<S> + ?Sized>(mdp: &M, cap: u128) -> Result<JointSpace> {
    let n = mdp.n_agents();
    let states = JointIndexer::new((0..n).map(|i| mdp.n_states(i)).collect(), "joint state space", cap)?;
    let actions = JointIndexer::new((0..n).map(|i| mdp.n_actions(i)).collect(), "joint action space", cap)?;
    Ok(JointSpace { states, actions })
}

/// Factored MDP given by explicit tables.
///
/// Agent `i`'s kernel is indexed by the states of its closed neighborhood
/// (itself plus graph neighbors, ascending) and its action. Rewards are local:
/// `r_i(s_i, a_i)`.
#[derive(Debug, Clone)]
pub struct TabularFactoredMdp<S> {
    graph: AgentGraph,
    n_states: Vec<usize>,
    n_actions: Vec<usize>,
    scope: Vec<Vec<usize>>,
    // kernels[i][config * n_actions + a] = probability row over next local states
    kernels: Vec<Vec<Vec<S>>>,
    // rewards[i][s * n_actions + a]
    rewards: Vec<Vec<S>>,
    initial: Vec<(Vec<usize>, S)>,
    gamma: S,
    reward_bound: S,
}

impl<S: Scalar> TabularFactoredMdp<S> {
    /// `kernels[i]` must hold one row per (closed-neighborhood configuration,
    /// action) pair, configurations ordered lexicographically over the
    /// neighborhood in ascending agent order.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: AgentGraph,
        n_states: Vec<usize>,
        n_actions: Vec<usize>,
        kernels: Vec<Vec<Vec<S>>>,
        rewards: Vec<Vec<S>>,
        initial: Vec<(Vec<usize>, S)>,
        gamma: S,
        reward_bound: S,
    ) -> Result<Self> {
        let n = graph.n_agents();
        if n_states.len() != n || n_actions.len() != n || kernels.len() != n || rewards.len() != n {
            return Err(Error::arg("per-agent tables must have one entry per agent"));
        }
        if !(gamma > S::zero() && gamma < S::one()) {
            return Err(Error::arg("discount must lie in (0, 1)"));
        }
        if n_states.iter().chain(&n_actions).any(|&k| k == 0) {
            return Err(Error::arg("local spaces must be nonempty"));
        }
        let tol = S::of(1e-9);
        let mut scope = Vec::with_capacity(n);
        for i in 0..n {
            let members: Vec<usize> = graph.khop_neighborhood(i, 1)?.to_vec();
            let configs: usize = members.iter().map(|&j| n_states[j]).product();
            if kernels[i].len() != configs * n_actions[i] {
                return Err(Error::arg(format!(
                    "agent {i}: expected {} kernel rows, got {}",
                    configs * n_actions[i],
                    kernels[i].len()
                )));
            }
            for row in &kernels[i] {
                if row.len() != n_states[i] || row.iter().any(|&p| p < S::zero()) {
                    return Err(Error::arg(format!("agent {i}: malformed kernel row")));
                }
                let total: S = row.iter().copied().sum();
                if (total - S::one()).abs() > tol {
                    return Err(Error::arg(format!("agent {i}: kernel row sums to {total}")));
                }
            }
            if rewards[i].len() != n_states[i] * n_actions[i] {
                return Err(Error::arg(format!("agent {i}: reward table has wrong size")));
            }
            if rewards[i].iter().any(|r| r.abs() > reward_bound) {
                return Err(Error::arg(format!("agent {i}: reward exceeds declared bound")));
            }
            scope.push(members);
        }
        let total: S = initial.iter().map(|(_, p)| *p).sum();
        if initial.is_empty() || (total - S::one()).abs() > tol {
            return Err(Error::arg("initial distribution must be nonempty and sum to 1"));
        }
        for (s, _) in &initial {
            if s.len() != n || s.iter().zip(&n_states).any(|(x, k)| x >= k) {
                return Err(Error::arg("initial state outside the state space"));
            }
        }
        Ok(Self { graph, n_states, n_actions, scope, kernels, rewards, initial, gamma, reward_bound })
    }

    /// Random instance with Dirichlet(1)-like kernels, rewards uniform in
    /// `[-1, 1]` (so `R = 1`) and a random point-mass-free product initial law.
    pub fn random<R: Rng + ?Sized>(
        graph: AgentGraph,
        n_states: usize,
        n_actions: usize,
        gamma: S,
        rng: &mut R,
    ) -> Result<Self> {
        let n = graph.n_agents();
        let mut kernels = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for i in 0..n {
            let members = graph.khop_neighborhood(i, 1)?.len();
            let rows = n_states.pow(members as u32) * n_actions;
            let table: Vec<Vec<S>> = (0..rows)
                .map(|_| {
                    let w: Vec<f64> = (0..n_states).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                    let z: f64 = w.iter().sum();
                    w.iter().map(|x| S::of(x / z)).collect()
                })
                .collect();
            kernels.push(table);
            rewards.push((0..n_states * n_actions).map(|_| S::of(rng.random_range(-1.0..1.0))).collect());
        }
        let marginals: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..n_states).map(|_| 0.2 + rng.random::<f64>()).collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|x| x / z).collect()
            })
            .collect();
        let idx = JointIndexer::new(vec![n_states; n], "joint state space", DEFAULT_ENUMERATION_CAP)?;
        let initial = (0..idx.len())
            .map(|k| {
                let s = idx.decode(k);
                let p: f64 = s.iter().enumerate().map(|(i, &x)| marginals[i][x]).product();
                (s, S::of(p))
            })
            .collect();
        Self::new(graph, vec![n_states; n], vec![n_actions; n], kernels, rewards, initial, gamma, S::one())
    }

    fn config_index(&self, agent: usize, state: &[usize]) -> usize {
        self.scope[agent].iter().fold(0, |acc, &j| acc * self.n_states[j] + state[j])
    }

    pub fn local_reward(&self, agent: usize, s: usize, a: usize) -> S {
        self.rewards[agent][s * self.n_actions[agent] + a]
    }
}

impl<S: Scalar> FactoredMdp<S> for TabularFactoredMdp<S> {
    type Bookkeeping = ();

    fn graph(&self) -> &AgentGraph {
        &self.graph
    }

    fn n_states(&self, agent: usize) -> usize {
        self.n_states[agent]
    }

    fn n_actions(&self, agent: usize) -> usize {
        self.n_actions[agent]
    }

    fn gamma(&self) -> S {
        self.gamma
    }

    fn reward_bound(&self) -> S {
        self.reward_bound
    }

    fn initial_distribution(&self) -> Vec<(Vec<usize>, S)> {
        self.initial.clone()
    }

    fn transition(&self, agent: usize, state: &[usize], action: usize) -> Vec<(usize, S)> {
        let row = &self.kernels[agent][self.config_index(agent, state) * self.n_actions[agent] + action];
        row.iter()
            .enumerate()
            .filter(|(_, &p)| p > S::zero())
            .map(|(s, &p)| (s, p))
            .collect()
    }

    fn begin_episode(&self, _initial: &[usize]) {}

    fn rewards(&self, state: &[usize], action: &[usize], _next: &[usize], _book: &(), out: &mut [S]) {
        for (i, r) in out.iter_mut().enumerate() {
            *r = self.local_reward(i, state[i], action[i]);
        }
    }

    fn advance(&self, _book: &mut (), _state: &[usize], _action: &[usize], _next: &[usize]) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn two_agent() -> TabularFactoredMdp<f64> {
        TabularFactoredMdp::random(AgentGraph::chain(2).unwrap(), 2, 2, 0.9, &mut stream(1, &[])).unwrap()
    }

    #[test]
    fn enumeration_order_is_lexicographic() {
        let m = two_agent();
        let space = enumerate_joint(&m, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(space.state_list(), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn enumeration_sizes() {
        let g = AgentGraph::chain(3).unwrap();
        let m = TabularFactoredMdp::<f64>::random(g, 3, 2, 0.5, &mut stream(2, &[])).unwrap();
        let space = enumerate_joint(&m, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(space.states.len(), 27);
        assert_eq!(space.actions.len(), 8);
        for k in 0..27 {
            assert_eq!(space.states.index(&space.states.decode(k)), k);
        }
    }

    #[test]
    fn capacity_error_names_size() {
        let err = JointIndexer::new(vec![25; 5], "joint state space", 1_000_000).unwrap_err();
        match err {
            Error::Capacity { size, .. } => assert_eq!(size, "9765625"),
            other => panic!("unexpected {other:?}"),
        }
        let huge = JointIndexer::new(vec![64; 40], "joint state space", 10).unwrap_err();
        assert!(huge.to_string().contains("~1e72"));
    }

    #[test]
    fn step_rejects_out_of_space() {
        let m = two_agent();
        let mut rng = stream(0, &[]);
        assert!(step(&m, &[0, 2], &[0, 0], &mut rng).is_err());
        assert!(step(&m, &[0, 0], &[0, 5], &mut rng).is_err());
        assert!(step(&m, &[0], &[0], &mut rng).is_err());
    }

    #[test]
    fn rows_normalized() {
        let m = two_agent();
        for i in 0..2 {
            for s0 in 0..2 {
                for s1 in 0..2 {
                    for a in 0..2 {
                        let total: f64 = m.transition(i, &[s0, s1], a).iter().map(|p| p.1).sum();
                        assert!((total - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
