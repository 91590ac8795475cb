//! Brute-force reference computations shared by the integration tests.
//!
//! Everything here is rebuilt straight from the `FactoredMdp` trait by
//! enumeration and value iteration, without touching the library's oracle.

#![allow(dead_code)]

use std::collections::VecDeque;

use netpref::mdp::FactoredMdp;
use netpref::policy::PolicyTable;

/// All joint vectors of a mixed-radix space, first component most significant.
pub fn product(radices: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &r in radices {
        let mut next = Vec::with_capacity(out.len() * r);
        for prefix in &out {
            for x in 0..r {
                let mut v = prefix.clone();
                v.push(x);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

pub struct Dense {
    pub states: Vec<Vec<usize>>,
    pub actions: Vec<Vec<usize>>,
    /// p[s][a][s']
    pub p: Vec<Vec<Vec<f64>>>,
    /// r[i][s][a], expected over s'
    pub r: Vec<Vec<Vec<f64>>>,
    pub rho: Vec<f64>,
    pub gamma: f64,
}

fn position(states: &[Vec<usize>], s: &[usize]) -> usize {
    states.iter().position(|x| x == s).expect("state in the enumeration")
}

pub fn dense<M: FactoredMdp<f64, Bookkeeping = ()>>(mdp: &M) -> Dense {
    let n = mdp.n_agents();
    let states = product(&(0..n).map(|i| mdp.n_states(i)).collect::<Vec<_>>());
    let actions = product(&(0..n).map(|i| mdp.n_actions(i)).collect::<Vec<_>>());
    let ns = states.len();
    let mut p = vec![vec![vec![0.0; ns]; actions.len()]; ns];
    let mut r = vec![vec![vec![0.0; actions.len()]; ns]; n];
    let mut buf = vec![0.0; n];
    for (si, s) in states.iter().enumerate() {
        for (ai, a) in actions.iter().enumerate() {
            let locals: Vec<Vec<(usize, f64)>> = (0..n).map(|i| mdp.transition(i, s, a[i])).collect();
            for (ti, t) in states.iter().enumerate() {
                let pr: f64 = (0..n)
                    .map(|i| locals[i].iter().find(|(x, _)| *x == t[i]).map_or(0.0, |&(_, q)| q))
                    .product();
                if pr == 0.0 {
                    continue;
                }
                p[si][ai][ti] += pr;
                mdp.rewards(s, a, t, &(), &mut buf);
                for i in 0..n {
                    r[i][si][ai] += pr * buf[i];
                }
            }
        }
    }
    let mut rho = vec![0.0; ns];
    for (s, w) in mdp.initial_distribution() {
        rho[position(&states, &s)] += w;
    }
    Dense { states, actions, p, r, rho, gamma: mdp.gamma() }
}

impl Dense {
    pub fn n_agents(&self) -> usize {
        self.r.len()
    }

    /// pi[s][a] of the joint policy.
    pub fn joint_policy<M: FactoredMdp<f64>>(&self, mdp: &M, policy: &PolicyTable<f64>) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|s| {
                self.actions
                    .iter()
                    .map(|a| {
                        (0..s.len())
                            .map(|i| policy.action_probs(i, mdp.observe(i, s[i]))[a[i]])
                            .product()
                    })
                    .collect()
            })
            .collect()
    }

    fn network_reward(&self, members: &[usize]) -> Vec<Vec<f64>> {
        let n = self.n_agents() as f64;
        (0..self.states.len())
            .map(|s| (0..self.actions.len()).map(|a| members.iter().map(|&j| self.r[j][s][a]).sum::<f64>() / n).collect())
            .collect()
    }

    /// Value iteration on the network-average reward until the sup change is below `1e-14`.
    pub fn values(&self, pi: &[Vec<f64>]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.n_agents()).collect();
        let rbar = self.network_reward(&all);
        let ns = self.states.len();
        let mut v = vec![0.0; ns];
        loop {
            let next: Vec<f64> = (0..ns)
                .map(|s| {
                    (0..self.actions.len())
                        .map(|a| {
                            let ev: f64 = (0..ns).map(|t| self.p[s][a][t] * v[t]).sum();
                            pi[s][a] * (rbar[s][a] + self.gamma * ev)
                        })
                        .sum()
                })
                .collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta < 1e-14 {
                return v;
            }
        }
    }

    pub fn objective<M: FactoredMdp<f64>>(&self, mdp: &M, policy: &PolicyTable<f64>) -> f64 {
        let v = self.values(&self.joint_policy(mdp, policy));
        v.iter().zip(&self.rho).map(|(a, b)| a * b).sum()
    }

    /// Forward-propagated `E[(1/N) sum_{t<H} gamma^t sum_{j in members} r_j]`.
    pub fn truncated_objective<M: FactoredMdp<f64>>(
        &self,
        mdp: &M,
        policy: &PolicyTable<f64>,
        members: &[usize],
        horizon: usize,
    ) -> f64 {
        let pi = self.joint_policy(mdp, policy);
        let rew = self.network_reward(members);
        let ns = self.states.len();
        let mut dist = self.rho.clone();
        let mut total = 0.0;
        let mut w = 1.0;
        for _ in 0..horizon {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                if dist[s] == 0.0 {
                    continue;
                }
                for a in 0..self.actions.len() {
                    let m = dist[s] * pi[s][a];
                    total += w * m * rew[s][a];
                    for t in 0..ns {
                        next[t] += m * self.p[s][a][t];
                    }
                }
            }
            dist = next;
            w *= self.gamma;
        }
        total
    }
}

/// Central finite differences of `f` at `theta`.
pub fn finite_difference(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..theta.len())
        .map(|k| {
            let mut up = theta.to_vec();
            up[k] += h;
            let mut down = theta.to_vec();
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// All-pairs hop distances by Floyd-Warshall; `usize::MAX` when unreachable.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.into_iter().map(|r| r.into_iter().map(|x| if x >= inf { usize::MAX } else { x }).collect()).collect()
}

/// Agents within `kappa` hops by plain BFS.
pub fn bfs_ball(n: usize, edges: &[(usize, usize)], agent: usize, kappa: usize) -> Vec<usize> {
    let mut adj = vec![vec![]; n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist = vec![usize::MAX; n];
    dist[agent] = 0;
    let mut q = VecDeque::from([agent]);
    while let Some(u) = q.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                q.push_back(w);
            }
        }
    }
    (0..n).filter(|&j| dist[j] <= kappa).collect()
}
