//! Distributed zeroth-order policy gradient from preference feedback.
//!
//! Each iteration every agent draws its own Gaussian perturbation block,
//! then `K` trials each roll out the current and the perturbed joint policy.
//! Every agent compares the two κ-hop truncated trajectories through `M`
//! simulated evaluators, inverts the link on the trimmed vote frequency and
//! scales its own perturbation block by the average.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::PolicyEvaluator;
use crate::mdp::FactoredMdp;
use crate::policy::{PolicyShape, PolicyTable};
use crate::preference::{count_votes, trim_level, trimmed_inverse, Link};
use crate::rng::{stream, tag};
use crate::rollout::{neighborhood_rewards, rollout_joint};
use crate::scalar::{norm, Scalar};

/// Where the per-trial comparison value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    /// `M` Bernoulli votes, trimmed and passed through the inverse link.
    #[default]
    Preference,
    /// The exact reward difference `r_hat_1 - r_hat_0`, clamped to the trimmed range.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// `T`.
    pub iterations: usize,
    /// `K`.
    pub trials: usize,
    /// `M`.
    pub evaluators: usize,
    /// `H`.
    pub horizon: usize,
    pub kappa: usize,
    pub mu: f64,
    pub alpha: f64,
    pub link: Link,
    pub feedback: Feedback,
    /// Reuse the base rollout's random stream for the perturbed rollout.
    pub common_random_numbers: bool,
    /// Optional cap on `||g||`; off unless set.
    pub grad_clip: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            trials: 100,
            evaluators: 200,
            horizon: 10,
            kappa: 1,
            mu: 0.1,
            alpha: 0.1,
            link: Link::BradleyTerry,
            feedback: Feedback::Preference,
            common_random_numbers: false,
            grad_clip: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("trials", self.trials), ("evaluators", self.evaluators), ("horizon", self.horizon)] {
            if v == 0 {
                return Err(Error::config(format!("learner.{name}"), "must be at least 1"));
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::config("learner.mu", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("learner.alpha", "must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("learner.grad_clip", "must be positive when set"));
            }
        }
        self.link.validate()
    }
}

/// One iteration's local gradient estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<S> {
    /// Concatenated `g_{i,t}` blocks.
    pub grad: Vec<S>,
    /// The perturbation `v_t` that produced it.
    pub perturbation: Vec<S>,
    /// `invlink[k][i] = sigma^{-1}(p_hat^{t,k}_i)`.
    pub invlink: Vec<Vec<S>>,
}

impl<S: Scalar> GradientEstimate<S> {
    pub fn mean_abs_invlink(&self) -> S {
        let count = self.invlink.iter().map(|r| r.len()).sum::<usize>();
        if count == 0 {
            return S::zero();
        }
        self.invlink.iter().flatten().map(|x| x.abs()).sum::<S>() / S::of_usize(count)
    }
}

/// `v_t`, each agent's block drawn from its own stream.
pub fn sample_perturbation<S: Scalar>(shape: &PolicyShape, seed: u64, iteration: u64) -> Vec<S> {
    let mut v = Vec::with_capacity(shape.total_dim());
    for i in 0..shape.n_agents() {
        let mut rng = stream(seed, &[tag::PERTURBATION, iteration, i as u64]);
        v.extend((0..shape.agent_dim(i)).map(|_| S::of(rng.sample::<f64, _>(StandardNormal))));
    }
    v
}

/// Addresses the random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialKey {
    pub seed: u64,
    pub iteration: u64,
    pub trial: u64,
}

/// Per-agent outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome<S> {
    pub base_reward: Vec<S>,
    pub perturbed_reward: Vec<S>,
    pub invlink: Vec<S>,
}

/// Inverse-link value for one comparison.
pub fn comparison_value<S: Scalar, R: Rng + ?Sized>(
    cfg: &LearnerConfig,
    delta: S,
    r1: S,
    r0: S,
    rng: &mut R,
) -> Result<S> {
    let link = &cfg.link;
    match cfg.feedback {
        Feedback::Oracle => {
            let lo = link.inverse(delta);
            let hi = link.inverse_complement(delta);
            Ok((r1 - r0).max(lo).min(hi))
        }
        Feedback::Preference => {
            let p = link.forward(r1 - r0).as_f64();
            let ones = count_votes(p, cfg.evaluators, rng)?;
            trimmed_inverse(link, S::of(ones as f64 / cfg.evaluators as f64), delta)
        }
    }
}

/// Base rollout, reset, perturbed rollout, then one comparison per agent.
pub fn run_trial<S, M>(
    mdp: &M,
    policy: &PolicyTable<S>,
    perturbed: &PolicyTable<S>,
    cfg: &LearnerConfig,
    key: TrialKey,
) -> Result<TrialOutcome<S>>
where
    S: Scalar,
    M: FactoredMdp<S>,
{
    let TrialKey { seed, iteration, trial } = key;
    let gamma = mdp.gamma();
    let delta = trim_level(&cfg.link, mdp.reward_bound(), gamma, cfg.horizon);
    let mut base_rng = stream(seed, &[tag::ROLLOUT, iteration, trial, 0]);
    let base = rollout_joint(mdp, policy, cfg.horizon, &mut base_rng)?;
    let second = if cfg.common_random_numbers { 0 } else { 1 };
    let mut pert_rng = stream(seed, &[tag::ROLLOUT, iteration, trial, second]);
    let pert = rollout_joint(mdp, perturbed, cfg.horizon, &mut pert_rng)?;
    let graph = mdp.graph();
    let r0 = neighborhood_rewards(&base.discounted_returns(gamma), graph, cfg.kappa)?;
    let r1 = neighborhood_rewards(&pert.discounted_returns(gamma), graph, cfg.kappa)?;
    let invlink = (0..r0.len())
        .map(|i| {
            let mut rng = stream(seed, &[tag::VOTES, iteration, trial, i as u64]);
            comparison_value(cfg, delta, r1[i], r0[i], &mut rng)
        })
        .collect::<Result<Vec<S>>>()?;
    Ok(TrialOutcome { base_reward: r0, perturbed_reward: r1, invlink })
}

/// `g_i = (1 / (K mu)) (sum_k c_{i,k}) v_i`.
pub fn assemble_gradient<S: Scalar>(
    shape: &PolicyShape,
    invlink: Vec<Vec<S>>,
    perturbation: Vec<S>,
    mu: S,
) -> Result<GradientEstimate<S>> {
    let n = shape.n_agents();
    if perturbation.len() != shape.total_dim() {
        return Err(Error::arg("perturbation length does not match the policy shape"));
    }
    if invlink.is_empty() || invlink.iter().any(|row| row.len() != n) {
        return Err(Error::arg("need one value per agent for every trial"));
    }
    let k = S::of_usize(invlink.len());
    let mut grad = vec![S::zero(); perturbation.len()];
    for i in 0..n {
        let total: S = invlink.iter().map(|row| row[i]).sum();
        let scale = total / (k * mu);
        for j in shape.block(i) {
            grad[j] = scale * perturbation[j];
        }
    }
    Ok(GradientEstimate { grad, perturbation, invlink })
}

/// Rolls out all `K` trials of one iteration and assembles the estimate.
///
/// Trials run in parallel; results are reduced in trial order.
pub fn estimate_gradient<S, M>(
    mdp: &M,
    policy: &PolicyTable<S>,
    cfg: &LearnerConfig,
    seed: u64,
    iteration: u64,
) -> Result<GradientEstimate<S>>
where
    S: Scalar,
    M: FactoredMdp<S>,
{
    let v = sample_perturbation(policy.shape(), seed, iteration);
    estimate_gradient_along(mdp, policy, cfg, seed, iteration, v)
}

/// As [`estimate_gradient`] with a given perturbation.
pub fn estimate_gradient_along<S, M>(
    mdp: &M,
    policy: &PolicyTable<S>,
    cfg: &LearnerConfig,
    seed: u64,
    iteration: u64,
    v: Vec<S>,
) -> Result<GradientEstimate<S>>
where
    S: Scalar,
    M: FactoredMdp<S>,
{
    let mu = S::of(cfg.mu);
    let perturbed = policy.perturb(&v, mu)?;
    let outcomes: Vec<TrialOutcome<S>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(mdp, policy, &perturbed, cfg, TrialKey { seed, iteration, trial }))
        .collect::<Result<_>>()?;
    let invlink = outcomes.into_iter().map(|o| o.invlink).collect();
    assemble_gradient(policy.shape(), invlink, v, mu)
}

/// `theta + alpha g`.
pub fn update<S: Scalar>(policy: &PolicyTable<S>, grad: &[S], alpha: S) -> Result<PolicyTable<S>> {
    if grad.len() != policy.theta().len() {
        return Err(Error::arg(format!(
            "gradient has length {}, policy has {} parameters",
            grad.len(),
            policy.theta().len()
        )));
    }
    let theta = policy.theta().iter().zip(grad).map(|(&t, &g)| t + alpha * g).collect();
    policy.with_theta(theta)
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iteration: usize,
    /// Evaluated return of the policy after this iteration's update.
    pub ret: f64,
    pub grad_norm: f64,
    pub mean_abs_invlink: f64,
    pub elapsed_ms: u64,
}

pub const METRICS_HEADER: &str = "iteration,return,grad_norm,mean_abs_invlink,elapsed_ms";

impl MetricRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.ret, self.grad_norm, self.mean_abs_invlink, self.elapsed_ms
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(Error::arg(format!("metrics line has {} fields: {line}", f.len())));
        }
        let bad = || Error::arg(format!("malformed metrics line: {line}"));
        Ok(Self {
            iteration: f[0].parse().map_err(|_| bad())?,
            ret: f[1].parse().map_err(|_| bad())?,
            grad_norm: f[2].parse().map_err(|_| bad())?,
            mean_abs_invlink: f[3].parse().map_err(|_| bad())?,
            elapsed_ms: f[4].parse().map_err(|_| bad())?,
        })
    }
}

/// Options of a training run beyond the learner hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    /// Record wall-clock time in `elapsed_ms`; zero otherwise, which keeps metric files reproducible.
    pub record_wall_time: bool,
    /// Evaluate and emit a row every this many iterations. The last iteration always gets a row.
    pub metric_interval: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: 0, record_wall_time: false, metric_interval: 1 }
    }
}

impl RunOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub policy: PolicyTable<S>,
    pub initial_return: f64,
    pub rows: Vec<MetricRow>,
}

/// Runs `T` iterations of perturb / compare / update from `initial`.
///
/// `on_iteration(t, row, policy)` runs after every update; `row` is set on
/// metric iterations only.
pub fn train<S, M, E, F>(
    mdp: &M,
    initial: PolicyTable<S>,
    cfg: &LearnerConfig,
    evaluator: &E,
    opts: RunOptions,
    mut on_iteration: F,
) -> Result<TrainOutcome<S>>
where
    S: Scalar,
    M: FactoredMdp<S>,
    E: PolicyEvaluator<S> + ?Sized,
    F: FnMut(usize, Option<&MetricRow>, &PolicyTable<S>) -> Result<()>,
{
    cfg.validate()?;
    if opts.metric_interval == 0 {
        return Err(Error::config("output.metric_interval", "must be at least 1"));
    }
    let start = Instant::now();
    let initial_return = evaluator.evaluate(&initial)?.as_f64();
    let mut policy = initial;
    let mut rows = Vec::with_capacity(cfg.iterations);
    let alpha = S::of(cfg.alpha);
    for t in 0..cfg.iterations {
        let est = estimate_gradient(mdp, &policy, cfg, opts.seed, t as u64)?;
        debug_assert!(on_perturbation_span(policy.shape(), &est));
        let mut g = est.grad.clone();
        let g_norm = norm(&g);
        if let Some(cap) = cfg.grad_clip {
            let cap = S::of(cap);
            if g_norm > cap {
                g.iter_mut().for_each(|x| *x = *x * cap / g_norm);
            }
        }
        policy = update(&policy, &g, alpha)?;
        if (t + 1) % opts.metric_interval != 0 && t + 1 != cfg.iterations {
            on_iteration(t, None, &policy)?;
            continue;
        }
        let row = MetricRow {
            iteration: t,
            ret: evaluator.evaluate(&policy)?.as_f64(),
            grad_norm: g_norm.as_f64(),
            mean_abs_invlink: est.mean_abs_invlink().as_f64(),
            elapsed_ms: if opts.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 },
        };
        on_iteration(t, Some(&row), &policy)?;
        rows.push(row);
    }
    Ok(TrainOutcome { policy, initial_return, rows })
}

/// Whether every agent's block is a scalar multiple of its perturbation block.
pub fn on_perturbation_span<S: Scalar>(shape: &PolicyShape, est: &GradientEstimate<S>) -> bool {
    (0..shape.n_agents()).all(|i| {
        let b = shape.block(i);
        let g = &est.grad[b.clone()];
        let v = &est.perturbation[b];
        let (gn, vn) = (norm(g), norm(v));
        if gn == S::zero() || vn == S::zero() {
            return true;
        }
        let c = crate::scalar::dot(g, v) / (gn * vn);
        (c.abs() - S::one()).abs() < S::of(1e-9).max(S::epsilon() * S::of(64.0))
    })
}

/// Perturbation distance suggested by the convergence analysis for a user-supplied smoothness estimate `l`:
/// `mu^2 = max{ R / ((1-gamma) L sqrt(K N d_tot)), (3 L_sigma / L) sqrt(log M / M) }`.
#[allow(clippy::too_many_arguments)]
pub fn suggested_mu(
    r_bound: f64,
    gamma: f64,
    l: f64,
    trials: usize,
    n_agents: usize,
    d_tot: usize,
    l_sigma: f64,
    evaluators: usize,
) -> f64 {
    let a = r_bound / ((1.0 - gamma) * l * ((trials * n_agents * d_tot) as f64).sqrt());
    let m = evaluators as f64;
    let b = 3.0 * l_sigma / l * (m.ln() / m).sqrt();
    a.max(b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assembly_example() {
        let shape = PolicyShape::new(vec![1], vec![2]).unwrap();
        let g = assemble_gradient(&shape, vec![vec![0.2], vec![0.4]], vec![1.0, 0.0], 0.1).unwrap();
        assert!((g.grad[0] - 3.0f64).abs() < 1e-12);
        assert_eq!(g.grad[1], 0.0);
        assert!(on_perturbation_span(&shape, &g));
    }

    #[test]
    fn zero_values_zero_gradient() {
        let shape = PolicyShape::new(vec![2, 1], vec![2, 3]).unwrap();
        let v = vec![0.3, -1.0, 2.0, 0.5, 1.0, 1.0, -2.0];
        let g = assemble_gradient(&shape, vec![vec![0.0, 0.0]; 3], v, 0.1).unwrap();
        assert!(g.grad.iter().all(|&x: &f64| x == 0.0));
    }

    #[test]
    fn update_example() {
        let p = PolicyTable::<f64>::zeros(PolicyShape::new(vec![1], vec![2]).unwrap());
        let q = update(&p, &[3.0, 0.0], 0.1).unwrap();
        assert!((q.theta()[0] - 0.3).abs() < 1e-15);
        assert_eq!(q.theta()[1], 0.0);
        assert!(update(&p, &[1.0], 0.1).is_err());
    }

    #[test]
    fn perturbation_is_reproducible() {
        let shape = PolicyShape::new(vec![3, 2], vec![2, 2]).unwrap();
        let a: Vec<f64> = sample_perturbation(&shape, 4, 9);
        let b: Vec<f64> = sample_perturbation(&shape, 4, 9);
        assert_eq!(a, b);
        assert_ne!(a, sample_perturbation::<f64>(&shape, 4, 10));
    }

    #[test]
    fn oracle_feedback_is_the_difference() {
        let cfg = LearnerConfig { feedback: Feedback::Oracle, ..Default::default() };
        let mut rng = stream(0, &[]);
        let c = comparison_value(&cfg, 0.01f64, 1.25, 0.5, &mut rng).unwrap();
        assert_eq!(c, 0.75);
        let clamped = comparison_value(&cfg, 0.25f64, 10.0, 0.0, &mut rng).unwrap();
        assert!((clamped - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn metrics_line_round_trip() {
        let row = MetricRow { iteration: 7, ret: -12.5, grad_norm: 0.1 + 0.2, mean_abs_invlink: 3.0, elapsed_ms: 0 };
        assert_eq!(MetricRow::parse_csv_line(&row.csv_line()).unwrap(), row);
    }
}
