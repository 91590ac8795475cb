//! Tabular softmax policies, one independent table per agent.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::FactoredMdp;
use crate::scalar::Scalar;

/// Layout of the concatenated parameter vector `theta = (theta_1, ..., theta_N)`.
///
/// Agent `i`'s block holds `n_states[i] * n_actions[i]` logits in row-major
/// `(state, action)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyShape {
    n_states: Vec<usize>,
    n_actions: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl PolicyShape {
    pub fn new(n_states: Vec<usize>, n_actions: Vec<usize>) -> Result<Self> {
        if n_states.len() != n_actions.len() || n_states.is_empty() {
            return Err(Error::arg("policy shape needs matching, nonempty per-agent sizes"));
        }
        if n_states.iter().chain(&n_actions).any(|&k| k == 0) {
            return Err(Error::arg("policy shape sizes must be positive"));
        }
        let mut offsets = Vec::with_capacity(n_states.len());
        let mut total = 0;
        for (s, a) in n_states.iter().zip(&n_actions) {
            offsets.push(total);
            total += s * a;
        }
        Ok(Self { n_states, n_actions, offsets, total })
    }

    /// Shape matching an MDP's observation and action spaces.
    pub fn for_mdp<S: Scalar, M: FactoredMdp<S>>(mdp: &M) -> Result<Self> {
        let n = mdp.n_agents();
        Self::new(
            (0..n).map(|i| mdp.n_observations(i)).collect(),
            (0..n).map(|i| mdp.n_actions(i)).collect(),
        )
    }

    pub fn n_agents(&self) -> usize {
        self.n_states.len()
    }

    pub fn n_states(&self, agent: usize) -> usize {
        self.n_states[agent]
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.n_actions[agent]
    }

    /// `d_i`.
    pub fn agent_dim(&self, agent: usize) -> usize {
        self.n_states[agent] * self.n_actions[agent]
    }

    /// `d_tot`.
    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn block(&self, agent: usize) -> std::ops::Range<usize> {
        let start = self.offsets[agent];
        start..start + self.agent_dim(agent)
    }

    #[inline]
    pub fn index(&self, agent: usize, state: usize, action: usize) -> usize {
        self.offsets[agent] + state * self.n_actions[agent] + action
    }
}

/// Immutable snapshot of joint policy parameters with cached probability rows.
#[derive(Debug, Clone)]
pub struct PolicyTable<S> {
    shape: Arc<PolicyShape>,
    theta: Vec<S>,
    probs: Vec<S>,
}

impl<S: Scalar> PartialEq for PolicyTable<S> {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.theta == other.theta
    }
}

impl<S: Scalar> PolicyTable<S> {
    /// All-zero logits: uniform action distributions.
    pub fn zeros(shape: PolicyShape) -> Self {
        let theta = vec![S::zero(); shape.total_dim()];
        Self::build(Arc::new(shape), theta)
    }

    pub fn from_theta(shape: PolicyShape, theta: Vec<S>) -> Result<Self> {
        Self::with_shared_shape(Arc::new(shape), theta)
    }

    fn with_shared_shape(shape: Arc<PolicyShape>, theta: Vec<S>) -> Result<Self> {
        if theta.len() != shape.total_dim() {
            return Err(Error::arg(format!(
                "parameter vector has length {}, policy shape needs {}",
                theta.len(),
                shape.total_dim()
            )));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("policy parameters must be finite"));
        }
        Ok(Self::build(shape, theta))
    }

    fn build(shape: Arc<PolicyShape>, theta: Vec<S>) -> Self {
        let mut probs = vec![S::zero(); theta.len()];
        for i in 0..shape.n_agents() {
            let na = shape.n_actions(i);
            for s in 0..shape.n_states(i) {
                let start = shape.index(i, s, 0);
                softmax_into(&theta[start..start + na], &mut probs[start..start + na]);
            }
        }
        Self { shape, theta, probs }
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn theta(&self) -> &[S] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<S> {
        self.theta
    }

    pub fn agent_theta(&self, agent: usize) -> &[S] {
        &self.theta[self.shape.block(agent)]
    }

    /// Same shape, new parameters.
    pub fn with_theta(&self, theta: Vec<S>) -> Result<Self> {
        Self::with_shared_shape(Arc::clone(&self.shape), theta)
    }

    /// `pi_i(. | s_i)`.
    #[inline]
    pub fn action_probs(&self, agent: usize, state: usize) -> &[S] {
        let start = self.shape.index(agent, state, 0);
        &self.probs[start..start + self.shape.n_actions(agent)]
    }

    pub fn log_prob(&self, agent: usize, state: usize, action: usize) -> S {
        let start = self.shape.index(agent, state, 0);
        let row = &self.theta[start..start + self.shape.n_actions(agent)];
        row[action] - log_sum_exp(row)
    }

    /// Joint log-probability of `actions` given per-agent observations.
    pub fn joint_log_prob(&self, observations: &[usize], actions: &[usize]) -> S {
        (0..self.shape.n_agents())
            .map(|i| self.log_prob(i, observations[i], actions[i]))
            .sum()
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, agent: usize, state: usize, rng: &mut R) -> usize {
        let row = self.action_probs(agent, state);
        let u = S::of(rng.random::<f64>());
        let mut acc = S::zero();
        for (a, &p) in row.iter().enumerate() {
            acc = acc + p;
            if u < acc {
                return a;
            }
        }
        row.len() - 1
    }

    /// Independent draws `a_i ~ pi_i(. | o_i)` for every agent.
    pub fn sample_joint_action<R: Rng + ?Sized>(&self, observations: &[usize], rng: &mut R) -> Vec<usize> {
        observations
            .iter()
            .enumerate()
            .map(|(i, &o)| self.sample_action(i, o, rng))
            .collect()
    }

    /// `grad_{theta_i} log pi_i(a | s)`: `e_a - pi(. | s)` on row `s`, zero elsewhere.
    pub fn score(&self, agent: usize, state: usize, action: usize) -> Vec<S> {
        let mut out = vec![S::zero(); self.shape.agent_dim(agent)];
        let na = self.shape.n_actions(agent);
        let row = self.action_probs(agent, state);
        for b in 0..na {
            out[state * na + b] = -row[b];
        }
        out[state * na + action] = out[state * na + action] + S::one();
        out
    }

    pub fn score_norm(&self, agent: usize, state: usize, action: usize) -> S {
        let row = self.action_probs(agent, state);
        row.iter()
            .enumerate()
            .map(|(b, &p)| {
                let e = if b == action { S::one() - p } else { -p };
                e * e
            })
            .sum::<S>()
            .sqrt()
    }

    /// Largest score norm over every `(agent, state, action)`; at most `sqrt(2)`.
    pub fn max_score_norm(&self) -> S {
        let mut best = S::zero();
        for i in 0..self.shape.n_agents() {
            for s in 0..self.shape.n_states(i) {
                for a in 0..self.shape.n_actions(i) {
                    best = best.max(self.score_norm(i, s, a));
                }
            }
        }
        best
    }

    /// `theta + mu * v` as a new table.
    pub fn perturb(&self, v: &[S], mu: S) -> Result<Self> {
        if v.len() != self.theta.len() {
            return Err(Error::arg(format!(
                "perturbation has length {}, expected {}",
                v.len(),
                self.theta.len()
            )));
        }
        let theta = self.theta.iter().zip(v).map(|(&t, &x)| t + mu * x).collect();
        self.with_theta(theta)
    }

    pub fn to_file_format(&self) -> PolicyFile {
        let agents = (0..self.shape.n_agents())
            .map(|i| {
                let na = self.shape.n_actions(i);
                self.agent_theta(i).chunks(na).map(|row| row.iter().map(|x| x.as_f64()).collect()).collect()
            })
            .collect();
        PolicyFile { agents }
    }

    pub fn from_file_format(file: &PolicyFile) -> Result<Self> {
        let n_states = file.agents.iter().map(|a| a.len()).collect();
        let n_actions = file
            .agents
            .iter()
            .map(|a| a.first().map_or(0, |row| row.len()))
            .collect();
        let shape = PolicyShape::new(n_states, n_actions)?;
        let mut theta = Vec::with_capacity(shape.total_dim());
        for (i, agent) in file.agents.iter().enumerate() {
            for row in agent {
                if row.len() != shape.n_actions(i) {
                    return Err(Error::arg(format!("agent {i}: ragged logit rows")));
                }
                theta.extend(row.iter().map(|&x| S::of(x)));
            }
        }
        Self::from_theta(shape, theta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file_format())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file_format(&serde_json::from_str(&text)?)
    }
}

/// Checkpoint format: `agents[i][state][action]` logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub agents: Vec<Vec<Vec<f64>>>,
}

/// Numerically stable softmax.
pub fn softmax_into<S: Scalar>(logits: &[S], out: &mut [S]) {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut z = S::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        z = z + *o;
    }
    for o in out.iter_mut() {
        *o = *o / z;
    }
}

pub fn log_sum_exp<S: Scalar>(logits: &[S]) -> S {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<S>().ln()
}
