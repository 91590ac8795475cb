//! Joint rollouts and spatiotemporally truncated trajectories.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::AgentGraph;
use crate::mdp::FactoredMdp;
use crate::policy::PolicyTable;
use crate::scalar::Scalar;

/// `H` steps of every agent's `(state, action, reward)`, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory<S> {
    n_agents: usize,
    horizon: usize,
    states: Vec<usize>,
    actions: Vec<usize>,
    rewards: Vec<S>,
}

impl<S: Scalar> JointTrajectory<S> {
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn state(&self, h: usize, agent: usize) -> usize {
        self.states[h * self.n_agents + agent]
    }

    #[inline]
    pub fn action(&self, h: usize, agent: usize) -> usize {
        self.actions[h * self.n_agents + agent]
    }

    #[inline]
    pub fn reward(&self, h: usize, agent: usize) -> S {
        self.rewards[h * self.n_agents + agent]
    }

    /// `sum_h gamma^h r_{j,h}` for every agent `j`.
    pub fn discounted_returns(&self, gamma: S) -> Vec<S> {
        let mut out = vec![S::zero(); self.n_agents];
        let mut w = S::one();
        for h in 0..self.horizon {
            for (j, o) in out.iter_mut().enumerate() {
                *o = *o + w * self.reward(h, j);
            }
            w = w * gamma;
        }
        out
    }

    /// Network-average discounted return `(1/N) sum_h gamma^h sum_j r_{j,h}`.
    pub fn average_return(&self, gamma: S) -> S {
        self.discounted_returns(gamma).into_iter().sum::<S>() / S::of_usize(self.n_agents)
    }

    /// Writes one JSON line per agent-step.
    pub fn write_jsonl<W: Write>(&self, rollout: usize, out: &mut W) -> Result<()> {
        #[derive(Serialize)]
        struct Record {
            rollout: usize,
            step: usize,
            agent: usize,
            state: usize,
            action: usize,
            reward: f64,
        }
        for h in 0..self.horizon {
            for agent in 0..self.n_agents {
                let rec = Record {
                    rollout,
                    step: h,
                    agent,
                    state: self.state(h, agent),
                    action: self.action(h, agent),
                    reward: self.reward(h, agent).as_f64(),
                };
                serde_json::to_writer(&mut *out, &rec)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Runs `policy` for `horizon` steps from a fresh initial state.
///
/// Each step draws the joint action from the agents' observations, records
/// rewards and then samples every agent's next local state.
pub fn rollout_joint<S, M, R>(mdp: &M, policy: &PolicyTable<S>, horizon: usize, rng: &mut R) -> Result<JointTrajectory<S>>
where
    S: Scalar,
    M: FactoredMdp<S>,
    R: Rng + ?Sized,
{
    if horizon == 0 {
        return Err(Error::arg("rollout horizon must be at least 1"));
    }
    let n = mdp.n_agents();
    if policy.shape().n_agents() != n {
        return Err(Error::arg("policy and environment disagree on the number of agents"));
    }
    let bound = mdp.reward_bound() * (S::one() + S::of(1e-6));
    let mut state = mdp.sample_initial(rng);
    let mut book = mdp.begin_episode(&state);
    let mut obs = vec![0; n];
    let mut next = vec![0; n];
    let mut step_rewards = vec![S::zero(); n];
    let mut traj = JointTrajectory {
        n_agents: n,
        horizon,
        states: Vec::with_capacity(n * horizon),
        actions: Vec::with_capacity(n * horizon),
        rewards: Vec::with_capacity(n * horizon),
    };
    for _ in 0..horizon {
        for (i, o) in obs.iter_mut().enumerate() {
            *o = mdp.observe(i, state[i]);
        }
        let action = policy.sample_joint_action(&obs, rng);
        for (i, nx) in next.iter_mut().enumerate() {
            *nx = mdp.sample_transition(i, &state, action[i], rng);
        }
        mdp.rewards(&state, &action, &next, &book, &mut step_rewards);
        debug_assert!(step_rewards.iter().all(|r| r.abs() <= bound), "reward exceeds declared bound");
        mdp.advance(&mut book, &state, &action, &next);
        traj.states.extend_from_slice(&state);
        traj.actions.extend_from_slice(&action);
        traj.rewards.extend_from_slice(&step_rewards);
        std::mem::swap(&mut state, &mut next);
    }
    Ok(traj)
}

/// One agent's view of a rollout: the records of its κ-hop neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTrajectory<S> {
    pub agent: usize,
    pub members: Vec<usize>,
    pub horizon: usize,
    /// `records[m][h]` for member `members[m]`.
    pub records: Vec<Vec<(usize, usize, S)>>,
}

pub fn truncate<S: Scalar>(
    traj: &JointTrajectory<S>,
    graph: &AgentGraph,
    agent: usize,
    kappa: usize,
) -> Result<TruncatedTrajectory<S>> {
    if graph.n_agents() != traj.n_agents {
        return Err(Error::arg("trajectory and graph disagree on the number of agents"));
    }
    let members = graph.khop_neighborhood(agent, kappa)?.to_vec();
    let records = members
        .iter()
        .map(|&j| {
            (0..traj.horizon)
                .map(|h| (traj.state(h, j), traj.action(h, j), traj.reward(h, j)))
                .collect()
        })
        .collect();
    Ok(TruncatedTrajectory { agent, members, horizon: traj.horizon, records })
}

/// `(1/N) sum_{h<H} gamma^h sum_{j in members} r_{j,h}`.
pub fn trajectory_reward<S: Scalar>(tt: &TruncatedTrajectory<S>, gamma: S, n_agents: usize) -> S {
    let mut total = S::zero();
    let mut w = S::one();
    for h in 0..tt.horizon {
        let step: S = tt.records.iter().map(|r| r[h].2).sum();
        total = total + w * step;
        w = w * gamma;
    }
    total / S::of_usize(n_agents)
}

/// `r_hat_i` for every agent from per-agent discounted returns.
pub fn neighborhood_rewards<S: Scalar>(returns: &[S], graph: &AgentGraph, kappa: usize) -> Result<Vec<S>> {
    let n = S::of_usize(returns.len());
    (0..returns.len())
        .map(|i| {
            let members = graph.khop_neighborhood(i, kappa)?;
            Ok(members.iter().map(|&j| returns[j]).sum::<S>() / n)
        })
        .collect()
}
