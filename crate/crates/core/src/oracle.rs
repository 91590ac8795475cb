//! Exact quantities on enumerable MDPs: Q-functions, discounted visitation,
//! the objective, its gradient, and the κ-hop / H-horizon truncated versions.
//!
//! Everything here works on a [`JointModel`], the fully enumerated joint
//! chain of an MDP whose rewards are Markov in `(s, a, s')`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::AgentGraph;
use crate::mdp::{enumerate_joint, FactoredMdp, JointSpace};
use crate::policy::{PolicyShape, PolicyTable};
use crate::scalar::{norm, Scalar};

/// Policy evaluation switches from a dense LU solve to Bellman iteration above this many states.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

/// Geometric sums are cut once `gamma^t` falls below this.
pub const SERIES_CUTOFF: f64 = 1e-12;

/// Enumerated joint chain with expected per-agent rewards.
#[derive(Debug, Clone)]
pub struct JointModel<S> {
    graph: AgentGraph,
    space: JointSpace,
    states: Vec<Vec<usize>>,
    actions: Vec<Vec<usize>>,
    // trans[s * n_actions + a] = sparse P(. | s, a)
    trans: Vec<Vec<(usize, S)>>,
    // rewards[i][s * n_actions + a] = E[r_i | s, a]
    rewards: Vec<Vec<S>>,
    rho: Vec<S>,
    // observations[i][local_state]
    observations: Vec<Vec<usize>>,
    shape: PolicyShape,
    gamma: S,
    reward_bound: S,
}

impl<S: Scalar> JointModel<S> {
    pub fn build<M>(mdp: &M, cap: u128) -> Result<Self>
    where
        M: FactoredMdp<S, Bookkeeping = ()>,
    {
        let n = mdp.n_agents();
        let space = enumerate_joint(mdp, cap)?;
        let states = space.state_list();
        let actions = space.action_list();
        let (ns, na) = (states.len(), actions.len());
        let mut trans = Vec::with_capacity(ns * na);
        let mut rewards = vec![vec![S::zero(); ns * na]; n];
        let mut step = vec![S::zero(); n];
        for s in &states {
            for a in &actions {
                let locals: Vec<Vec<(usize, S)>> = (0..n).map(|i| mdp.transition(i, s, a[i])).collect();
                let row = product_law(&space, &locals);
                let idx = trans.len();
                let mut next = vec![0; n];
                for &(k, p) in &row {
                    next.copy_from_slice(&states[k]);
                    mdp.rewards(s, a, &next, &(), &mut step);
                    for i in 0..n {
                        rewards[i][idx] = rewards[i][idx] + p * step[i];
                    }
                }
                trans.push(row);
            }
        }
        let mut rho = vec![S::zero(); ns];
        for (s, p) in mdp.initial_distribution() {
            rho[space.states.index(&s)] = rho[space.states.index(&s)] + p;
        }
        let observations = (0..n)
            .map(|i| (0..mdp.n_states(i)).map(|s| mdp.observe(i, s)).collect())
            .collect();
        Ok(Self {
            graph: mdp.graph().clone(),
            shape: PolicyShape::for_mdp(mdp)?,
            space,
            states,
            actions,
            trans,
            rewards,
            rho,
            observations,
            gamma: mdp.gamma(),
            reward_bound: mdp.reward_bound(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.graph.n_agents()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn graph(&self) -> &AgentGraph {
        &self.graph
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn reward_bound(&self) -> S {
        self.reward_bound
    }

    pub fn space(&self) -> &JointSpace {
        &self.space
    }

    pub fn policy_shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn initial(&self) -> &[S] {
        &self.rho
    }

    /// `P(. | s, a)` for joint indices.
    pub fn transition(&self, s: usize, a: usize) -> &[(usize, S)] {
        &self.trans[s * self.n_actions() + a]
    }

    /// `E[r_i | s, a]`.
    pub fn expected_reward(&self, agent: usize, s: usize, a: usize) -> S {
        self.rewards[agent][s * self.n_actions() + a]
    }

    /// `pi(a | s) = prod_i pi_i(a_i | o_i(s_i))`, laid out as `[s * |A| + a]`.
    pub fn joint_policy(&self, policy: &PolicyTable<S>) -> Result<Vec<S>> {
        if policy.shape() != &self.shape {
            return Err(Error::arg("policy shape does not match the model's observation/action spaces"));
        }
        let na = self.n_actions();
        let mut out = vec![S::one(); self.n_states() * na];
        for (si, s) in self.states.iter().enumerate() {
            let rows: Vec<&[S]> = (0..self.n_agents())
                .map(|i| policy.action_probs(i, self.observations[i][s[i]]))
                .collect();
            for (ai, a) in self.actions.iter().enumerate() {
                out[si * na + ai] = a.iter().enumerate().map(|(i, &x)| rows[i][x]).fold(S::one(), |p, q| p * q);
            }
        }
        Ok(out)
    }

    fn policy_chain(&self, pi: &[S]) -> Vec<Vec<(usize, S)>> {
        let na = self.n_actions();
        (0..self.n_states())
            .map(|s| {
                let mut row: Vec<(usize, S)> = Vec::new();
                for a in 0..na {
                    let w = pi[s * na + a];
                    for &(k, p) in self.transition(s, a) {
                        match row.iter_mut().find(|(j, _)| *j == k) {
                            Some(slot) => slot.1 = slot.1 + w * p,
                            None => row.push((k, w * p)),
                        }
                    }
                }
                row
            })
            .collect()
    }

    fn step_distribution(&self, chain: &[Vec<(usize, S)>], p: &[S]) -> Vec<S> {
        let mut next = vec![S::zero(); p.len()];
        for (s, row) in chain.iter().enumerate() {
            if p[s] == S::zero() {
                continue;
            }
            for &(k, q) in row {
                next[k] = next[k] + p[s] * q;
            }
        }
        next
    }

    /// Accumulates `sum_s weight(s) sum_a pi(a|s) q(s,a) grad log pi(a|s)` into `grad`.
    fn accumulate_score(&self, policy: &PolicyTable<S>, pi: &[S], weight: &[S], q: &[S], grad: &mut [S]) {
        let na = self.n_actions();
        let n = self.n_agents();
        let mut row_total = vec![S::zero(); n];
        for (s, state) in self.states.iter().enumerate() {
            if weight[s] == S::zero() {
                continue;
            }
            row_total.iter_mut().for_each(|x| *x = S::zero());
            for (a, action) in self.actions.iter().enumerate() {
                let w = weight[s] * pi[s * na + a] * q[s * na + a];
                for i in 0..n {
                    let o = self.observations[i][state[i]];
                    let k = self.shape.index(i, o, action[i]);
                    grad[k] = grad[k] + w;
                    row_total[i] = row_total[i] + w;
                }
            }
            for i in 0..n {
                let o = self.observations[i][state[i]];
                for (b, &p) in policy.action_probs(i, o).iter().enumerate() {
                    let k = self.shape.index(i, o, b);
                    grad[k] = grad[k] - row_total[i] * p;
                }
            }
        }
    }
}

fn product_law<S: Scalar>(space: &JointSpace, locals: &[Vec<(usize, S)>]) -> Vec<(usize, S)> {
    let mut out = vec![(0usize, S::one())];
    for (i, dist) in locals.iter().enumerate() {
        let stride = space.states.stride(i);
        let mut grown = Vec::with_capacity(out.len() * dist.len());
        for &(k, p) in &out {
            for &(x, q) in dist {
                grown.push((k + x * stride, p * q));
            }
        }
        out = grown;
    }
    out.sort_by_key(|e| e.0);
    out
}

/// Q-tables, values and derived quantities for one policy.
#[derive(Debug, Clone)]
pub struct ExactSolution<S> {
    /// `Q(s, a)` at `[s * |A| + a]`.
    pub q_global: Vec<S>,
    pub q_local: Vec<Vec<S>>,
    pub v_global: Vec<S>,
    pub v_local: Vec<Vec<S>>,
    /// Discounted visitation `d(s)`.
    pub visitation: Vec<S>,
    /// `gamma^T` at the cut of the visitation series.
    pub visitation_tail: S,
    pub objective: S,
    pub grad: Vec<S>,
    /// Largest sup-norm Bellman residual over the global and local Q-tables.
    pub bellman_residual: S,
    /// `max |Q - (1/N) sum_i Q_i|`, with the global table solved independently.
    pub decomposition_error: S,
}

/// Solves the policy-evaluation equations and assembles the exact gradient.
pub fn solve<S: Scalar>(model: &JointModel<S>, policy: &PolicyTable<S>) -> Result<ExactSolution<S>> {
    let pi = model.joint_policy(policy)?;
    let chain = model.policy_chain(&pi);
    let (ns, na, n) = (model.n_states(), model.n_actions(), model.n_agents());
    let gamma = model.gamma;
    let inv_n = S::one() / S::of_usize(n);

    let mut reward_sets: Vec<Vec<S>> = model.rewards.clone();
    let global: Vec<S> = (0..ns * na)
        .map(|k| model.rewards.iter().map(|r| r[k]).sum::<S>() * inv_n)
        .collect();
    reward_sets.push(global);

    let rhs: Vec<Vec<S>> = reward_sets
        .iter()
        .map(|r| (0..ns).map(|s| (0..na).map(|a| pi[s * na + a] * r[s * na + a]).sum()).collect())
        .collect();
    let values = if ns <= DENSE_SOLVE_LIMIT {
        let mut m = vec![S::zero(); ns * ns];
        for s in 0..ns {
            m[s * ns + s] = S::one();
            for &(k, p) in &chain[s] {
                m[s * ns + k] = m[s * ns + k] - gamma * p;
            }
        }
        linalg::solve_many(m, ns, &rhs)?
    } else {
        rhs.iter().map(|r| bellman_iterate(&chain, r, gamma)).collect()
    };

    let q_of = |r: &[S], v: &[S]| -> Vec<S> {
        (0..ns * na)
            .map(|k| {
                let future: S = model.trans[k].iter().map(|&(j, p)| p * v[j]).sum();
                r[k] + gamma * future
            })
            .collect()
    };
    let mut q_tables: Vec<Vec<S>> = reward_sets.iter().zip(&values).map(|(r, v)| q_of(r, v)).collect();
    let mut v_tables = values;

    let mut residual = S::zero();
    for (r, q) in reward_sets.iter().zip(&q_tables) {
        residual = residual.max(bellman_residual(model, &pi, r, q));
    }
    let q_global = q_tables.pop().unwrap_or_default();
    let v_global = v_tables.pop().unwrap_or_default();
    let decomposition_error = (0..ns * na)
        .map(|k| (q_global[k] - q_tables.iter().map(|q| q[k]).sum::<S>() * inv_n).abs())
        .fold(S::zero(), S::max);

    let (visitation, visitation_tail) = discounted_visitation(model, &chain);
    let objective = (0..ns).map(|s| model.rho[s] * v_global[s]).sum();
    let mut grad = vec![S::zero(); model.shape.total_dim()];
    let weight: Vec<S> = visitation.iter().map(|&d| d / (S::one() - gamma)).collect();
    model.accumulate_score(policy, &pi, &weight, &q_global, &mut grad);

    Ok(ExactSolution {
        q_global,
        q_local: q_tables,
        v_global,
        v_local: v_tables,
        visitation,
        visitation_tail,
        objective,
        grad,
        bellman_residual: residual,
        decomposition_error,
    })
}

fn bellman_residual<S: Scalar>(model: &JointModel<S>, pi: &[S], r: &[S], q: &[S]) -> S {
    let (ns, na) = (model.n_states(), model.n_actions());
    let v: Vec<S> = (0..ns).map(|s| (0..na).map(|a| pi[s * na + a] * q[s * na + a]).sum()).collect();
    (0..ns * na)
        .map(|k| {
            let future: S = model.trans[k].iter().map(|&(j, p)| p * v[j]).sum();
            (q[k] - r[k] - model.gamma * future).abs()
        })
        .fold(S::zero(), S::max)
}

fn bellman_iterate<S: Scalar>(chain: &[Vec<(usize, S)>], r: &[S], gamma: S) -> Vec<S> {
    let mut v = r.to_vec();
    let tol = S::of(1e-13);
    loop {
        let next: Vec<S> = chain
            .iter()
            .zip(r)
            .map(|(row, &rs)| rs + gamma * row.iter().map(|&(k, p)| p * v[k]).sum::<S>())
            .collect();
        let change = next.iter().zip(&v).map(|(a, b)| (*a - *b).abs()).fold(S::zero(), S::max);
        v = next;
        if change <= tol {
            return v;
        }
    }
}

/// `d(s) = (1 - gamma) sum_t gamma^t Pr(s_t = s)`, summed while `gamma^t >= 1e-12`.
fn discounted_visitation<S: Scalar>(model: &JointModel<S>, chain: &[Vec<(usize, S)>]) -> (Vec<S>, S) {
    let gamma = model.gamma;
    let cutoff = S::of(SERIES_CUTOFF);
    let mut p = model.rho.clone();
    let mut d = vec![S::zero(); p.len()];
    let mut w = S::one();
    while w >= cutoff {
        for (ds, &ps) in d.iter_mut().zip(&p) {
            *ds = *ds + w * ps;
        }
        p = model.step_distribution(chain, &p);
        w = w * gamma;
    }
    for x in &mut d {
        *x = *x * (S::one() - gamma);
    }
    (d, w)
}

/// `J(theta)`.
pub fn objective<S: Scalar>(model: &JointModel<S>, policy: &PolicyTable<S>) -> Result<S> {
    Ok(solve(model, policy)?.objective)
}

/// `grad J(theta)` over the concatenated parameter vector.
pub fn exact_gradient<S: Scalar>(model: &JointModel<S>, policy: &PolicyTable<S>) -> Result<Vec<S>> {
    Ok(solve(model, policy)?.grad)
}

/// Finite-horizon, κ-neighborhood objective of one agent and its gradient.
#[derive(Debug, Clone)]
pub struct TruncatedSolution<S> {
    pub objective: S,
    /// Gradient over all of theta; agent `i`'s own block is `grad_{theta_i} J_hat_i`.
    pub grad: Vec<S>,
}

fn truncated_impl<S: Scalar>(
    model: &JointModel<S>,
    policy: &PolicyTable<S>,
    agent: usize,
    kappa: usize,
    horizon: usize,
    want_grad: bool,
) -> Result<TruncatedSolution<S>> {
    if horizon == 0 {
        return Err(Error::arg("truncation horizon must be at least 1"));
    }
    let members = model.graph.khop_neighborhood(agent, kappa)?;
    let pi = model.joint_policy(policy)?;
    let (ns, na) = (model.n_states(), model.n_actions());
    let gamma = model.gamma;
    let inv_n = S::one() / S::of_usize(model.n_agents());
    let reward: Vec<S> = (0..ns * na)
        .map(|k| members.iter().map(|&j| model.rewards[j][k]).sum::<S>() * inv_n)
        .collect();

    // q_to_go[m - 1] is the m-step reward-to-go Q table
    let mut q_to_go: Vec<Vec<S>> = Vec::with_capacity(horizon);
    let mut v = vec![S::zero(); ns];
    for _ in 0..horizon {
        let q: Vec<S> = (0..ns * na)
            .map(|k| reward[k] + gamma * model.trans[k].iter().map(|&(j, p)| p * v[j]).sum::<S>())
            .collect();
        v = (0..ns).map(|s| (0..na).map(|a| pi[s * na + a] * q[s * na + a]).sum()).collect();
        q_to_go.push(q);
    }
    let objective = (0..ns).map(|s| model.rho[s] * v[s]).sum();

    let mut grad = vec![S::zero(); model.shape.total_dim()];
    if want_grad {
        let chain = model.policy_chain(&pi);
        let mut p = model.rho.clone();
        let mut w = S::one();
        for t in 0..horizon {
            let weight: Vec<S> = p.iter().map(|&x| w * x).collect();
            model.accumulate_score(policy, &pi, &weight, &q_to_go[horizon - t - 1], &mut grad);
            if t + 1 < horizon {
                p = model.step_distribution(&chain, &p);
            }
            w = w * gamma;
        }
    }
    Ok(TruncatedSolution { objective, grad })
}

/// `J_hat_i(theta)`: expected `H`-step discounted reward of agent `i`'s κ-hop neighborhood, scaled by `1/N`.
pub fn truncated_objective<S: Scalar>(
    model: &JointModel<S>,
    policy: &PolicyTable<S>,
    agent: usize,
    kappa: usize,
    horizon: usize,
) -> Result<S> {
    Ok(truncated_impl(model, policy, agent, kappa, horizon, false)?.objective)
}

/// Exact `grad J_hat_i` by backward induction plus the finite-horizon score sum.
pub fn truncated_gradient<S: Scalar>(
    model: &JointModel<S>,
    policy: &PolicyTable<S>,
    agent: usize,
    kappa: usize,
    horizon: usize,
) -> Result<TruncatedSolution<S>> {
    truncated_impl(model, policy, agent, kappa, horizon, true)
}

/// Right-hand side `B R ((H+1) gamma^H + 2 gamma^{kappa+1}) / (1-gamma)^2` of the truncation bound.
pub fn truncation_bound<S: Scalar>(b: S, r: S, gamma: S, kappa: usize, horizon: usize) -> S {
    let one = S::one();
    let h = S::of_usize(horizon);
    b * r * ((h + one) * gamma.powi(horizon as i32) + S::of(2.0) * gamma.powi(kappa as i32 + 1))
        / ((one - gamma) * (one - gamma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow<S> {
    pub agent: usize,
    pub lhs: S,
    pub rhs: S,
    pub margin: S,
}

/// Per-agent `|| grad_{theta_i} J_hat_i - grad_{theta_i} J ||` against the truncation bound.
///
/// `B` is the largest score norm of `policy`.
pub fn truncation_check<S: Scalar>(
    model: &JointModel<S>,
    policy: &PolicyTable<S>,
    kappa: usize,
    horizon: usize,
) -> Result<Vec<TruncationRow<S>>> {
    let full = exact_gradient(model, policy)?;
    let mut b = policy.max_score_norm();
    if b <= S::zero() {
        b = S::of(2.0).sqrt();
    }
    let rhs = truncation_bound(b, model.reward_bound, model.gamma, kappa, horizon);
    (0..model.n_agents())
        .map(|i| {
            let block = model.shape.block(i);
            let trunc = truncated_gradient(model, policy, i, kappa, horizon)?;
            let diff: Vec<S> = block.clone().map(|k| trunc.grad[k] - full[k]).collect();
            let lhs = norm(&diff);
            Ok(TruncationRow { agent: i, lhs, rhs, margin: rhs - lhs })
        })
        .collect()
}

/// Monte-Carlo mean and per-coordinate standard error.
#[derive(Debug, Clone)]
pub struct MeanEstimate<S> {
    pub mean: Vec<S>,
    pub std_err: Vec<S>,
    pub n_samples: usize,
}

/// Running per-coordinate mean and variance.
#[derive(Debug, Clone)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push<S: Scalar>(&mut self, x: &[S]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, q), &xi) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let xi = xi.as_f64();
            let delta = xi - *m;
            *m += delta / n;
            *q += delta * (xi - *m);
        }
    }

    pub fn finish<S: Scalar>(&self) -> MeanEstimate<S> {
        let n = self.n as f64;
        let std_err = self
            .m2
            .iter()
            .map(|&q| if self.n > 1 { S::of((q / (n - 1.0) / n).sqrt()) } else { S::zero() })
            .collect();
        MeanEstimate { mean: self.mean.iter().map(|&m| S::of(m)).collect(), std_err, n_samples: self.n }
    }
}

/// Gaussian-smoothing reference `E_v[(J_hat_i(theta + mu v) - J_hat_i(theta)) / mu * v]`,
/// with `J_hat_i` evaluated exactly for every draw.
#[allow(clippy::too_many_arguments)]
pub fn smoothed_gradient_reference<S: Scalar, R: Rng + ?Sized>(
    model: &JointModel<S>,
    policy: &PolicyTable<S>,
    agent: usize,
    kappa: usize,
    horizon: usize,
    mu: S,
    n_samples: usize,
    rng: &mut R,
) -> Result<MeanEstimate<S>> {
    if n_samples == 0 || mu <= S::zero() {
        return Err(Error::arg("need n_samples >= 1 and mu > 0"));
    }
    let base = truncated_objective(model, policy, agent, kappa, horizon)?;
    let dim = policy.shape().total_dim();
    let mut acc = Welford::new(dim);
    let mut v = vec![S::zero(); dim];
    for _ in 0..n_samples {
        for x in &mut v {
            *x = S::of(rng.sample::<f64, _>(StandardNormal));
        }
        let shifted = truncated_objective(model, &policy.perturb(&v, mu)?, agent, kappa, horizon)?;
        let c = (shifted - base) / mu;
        let sample: Vec<S> = v.iter().map(|&x| c * x).collect();
        acc.push(&sample);
    }
    Ok(acc.finish())
}

mod linalg {
    use crate::error::{Error, Result};
    use crate::scalar::Scalar;

    /// Solves `A x = b` for every `b` in `rhs` by LU with partial pivoting; `a` is row-major `n x n`.
    pub fn solve_many<S: Scalar>(mut a: Vec<S>, n: usize, rhs: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().partial_cmp(&a[y * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(col);
            if a[pivot * n + col].abs() <= S::epsilon() {
                return Err(Error::arg("singular policy-evaluation system"));
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                }
                perm.swap(col, pivot);
            }
            let d = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                if f == S::zero() {
                    continue;
                }
                a[row * n + col] = f;
                for k in col + 1..n {
                    a[row * n + k] = a[row * n + k] - f * a[col * n + k];
                }
            }
        }
        Ok(rhs
            .iter()
            .map(|b| {
                let mut x: Vec<S> = perm.iter().map(|&p| b[p]).collect();
                for row in 0..n {
                    let mut s = x[row];
                    for k in 0..row {
                        s = s - a[row * n + k] * x[k];
                    }
                    x[row] = s;
                }
                for row in (0..n).rev() {
                    let mut s = x[row];
                    for k in row + 1..n {
                        s = s - a[row * n + k] * x[k];
                    }
                    x[row] = s / a[row * n + row];
                }
                x
            })
            .collect())
    }

    #[cfg(test)]
    mod tests {
        #[test]
        fn small_system() {
            let a = vec![2.0, 1.0, 1.0, 3.0];
            let x = super::solve_many(a, 2, &[vec![3.0, 5.0]]).unwrap();
            assert!((x[0][0] - 0.8f64).abs() < 1e-14);
            assert!((x[0][1] - 1.4f64).abs() < 1e-14);
        }

        #[test]
        fn needs_pivoting() {
            let a = vec![0.0, 1.0, 1.0, 0.0];
            let x = super::solve_many(a, 2, &[vec![2.0, 7.0]]).unwrap();
            assert_eq!(x[0], vec![7.0, 2.0]);
        }
    }
}
