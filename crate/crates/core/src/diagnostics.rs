//! Invariant suites over the oracle, the estimator and the preference model.
//!
//! Every check becomes one [`CheckRow`]: a measured `lhs`, a reference `rhs`
//! and a tolerance. A row passes when `lhs <= rhs + tolerance` (or strictly
//! below `rhs` for [`CheckRow::lt`]).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::learner::{estimate_gradient, Feedback, LearnerConfig};
use crate::mdp::{FactoredMdp, TabularFactoredMdp, DEFAULT_ENUMERATION_CAP};
use crate::oracle::{self, JointModel, MeanEstimate, Welford};
use crate::policy::{PolicyShape, PolicyTable};
use crate::preference::{count_votes, trim_level, trimmed_inverse, Link};
use crate::rng::{stream, tag};
use crate::scalar::{cosine, norm};
use crate::zoo;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    /// `lhs <= rhs + tolerance`.
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let pass = lhs <= rhs + tolerance;
        Self { name: name.into(), lhs, rhs, tolerance, pass }
    }

    /// `lhs < rhs`.
    pub fn lt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, tolerance: 0.0, pass: lhs < rhs }
    }
}

pub const REPORT_HEADER: &str = "suite,name,lhs,rhs,tolerance,pass";

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<(Suite, CheckRow)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|(_, r)| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().map(|(_, r)| r).filter(|r| !r.pass)
    }

    pub fn extend(&mut self, suite: Suite, rows: Vec<CheckRow>) {
        self.rows.extend(rows.into_iter().map(|r| (suite, r)));
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for (suite, r) in &self.rows {
            writeln!(out, "{suite},{},{},{},{},{}", r.name, r.lhs, r.rhs, r.tolerance, if r.pass { "pass" } else { "fail" })?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("report is ASCII")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Bounds,
    Estimator,
    Preference,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 4] = ["bounds", "estimator", "preference", "all"];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Bounds => "bounds",
            Suite::Estimator => "estimator",
            Suite::Preference => "preference",
            Suite::All => "all",
        };
        f.write_str(s)
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounds" => Ok(Suite::Bounds),
            "estimator" => Ok(Suite::Estimator),
            "preference" => Ok(Suite::Preference),
            "all" => Ok(Suite::All),
            other => Err(Error::Argument(format!(
                "unknown diagnostic suite `{other}`; expected one of {}",
                Suite::NAMES.join(", ")
            ))),
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Report> {
    let mut report = Report::default();
    if matches!(suite, Suite::Bounds | Suite::All) {
        report.extend(Suite::Bounds, oracle_checks(seed)?);
        report.extend(Suite::Bounds, truncation_suite(seed)?);
    }
    if matches!(suite, Suite::Estimator | Suite::All) {
        report.extend(Suite::Estimator, estimator_identity(seed, &IdentitySettings::default())?);
        report.extend(Suite::Estimator, estimator_trends(seed, &TrendSettings::default())?);
    }
    if matches!(suite, Suite::Preference | Suite::All) {
        report.extend(Suite::Preference, vote_error_sweep(seed, &VOTE_SWEEP_EVALUATORS, 200)?);
    }
    Ok(report)
}

/// Logits drawn i.i.d. `N(0, scale^2)` from a diagnostic stream.
pub fn random_policy(shape: PolicyShape, seed: u64, key: u64, scale: f64) -> PolicyTable<f64> {
    let mut rng = stream(seed, &[tag::DIAGNOSTIC, key]);
    let theta = (0..shape.total_dim()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    PolicyTable::from_theta(shape, theta).expect("length matches the shape")
}

/// The three diagnostic models with their names.
pub fn zoo_models() -> Result<Vec<(&'static str, TabularFactoredMdp<f64>)>> {
    Ok(vec![
        ("bandit", zoo::bandit()?),
        ("two_state_chain", zoo::two_state_chain()?),
        ("three_agent_chain", zoo::three_agent_chain()?),
    ])
}

/// Central differences of the exact objective along every coordinate.
pub fn finite_difference_gradient(model: &JointModel<f64>, policy: &PolicyTable<f64>, h: f64) -> Result<Vec<f64>> {
    let theta = policy.theta().to_vec();
    (0..theta.len())
        .map(|k| {
            let mut up = theta.clone();
            up[k] += h;
            let mut down = theta.clone();
            down[k] -= h;
            let jp = oracle::objective(model, &policy.with_theta(up)?)?;
            let jm = oracle::objective(model, &policy.with_theta(down)?)?;
            Ok((jp - jm) / (2.0 * h))
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-12)
}

/// Bellman residual, value decomposition and finite-difference agreement on the zoo.
pub fn oracle_checks(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (m, (name, mdp)) in zoo_models()?.into_iter().enumerate() {
        let model = JointModel::build(&mdp, DEFAULT_ENUMERATION_CAP)?;
        let policy = random_policy(model.policy_shape().clone(), seed, 100 + m as u64, 1.0);
        let sol = oracle::solve(&model, &policy)?;
        rows.push(CheckRow::lt(format!("bellman_residual/{name}"), sol.bellman_residual, 1e-10));
        rows.push(CheckRow::lt(format!("decomposition/{name}"), sol.decomposition_error, 1e-9));
        let fd = finite_difference_gradient(&model, &policy, 1e-5)?;
        rows.push(CheckRow::le(format!("gradient_fd/{name}"), relative_error(&sol.grad, &fd), 1e-5, 0.0));
    }
    Ok(rows)
}

pub const TRUNCATION_GAMMAS: [f64; 2] = [0.5, 0.9];
pub const TRUNCATION_KAPPAS: [usize; 3] = [0, 1, 2];
pub const TRUNCATION_HORIZONS: [usize; 4] = [1, 2, 4, 8];
pub const TRUNCATION_INSTANCES: usize = 20;

/// Instance `m` of the randomized suite: 2 or 3 agents on a chain, 2 or 3 local states, 2 actions.
pub fn truncation_instance(seed: u64, m: usize, gamma: f64) -> Result<TabularFactoredMdp<f64>> {
    let n_agents = 2 + m % 2;
    let n_states = 2 + (m / 2) % 2;
    zoo::random_chain(n_agents, n_states, 2, gamma, seed.wrapping_mul(1000).wrapping_add(m as u64))
}

/// One row per (instance, gamma, kappa, H) with the largest per-agent error,
/// plus one decay row per instance.
pub fn truncation_suite(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for m in 0..TRUNCATION_INSTANCES {
        let mut coarse = 0.0;
        let mut fine = 0.0;
        for &gamma in &TRUNCATION_GAMMAS {
            let mdp = truncation_instance(seed, m, gamma)?;
            let model = JointModel::build(&mdp, DEFAULT_ENUMERATION_CAP)?;
            let policy = random_policy(model.policy_shape().clone(), seed, 200 + m as u64, 1.0);
            for &kappa in &TRUNCATION_KAPPAS {
                for &h in &TRUNCATION_HORIZONS {
                    let checks = oracle::truncation_check(&model, &policy, kappa, h)?;
                    let lhs = checks.iter().map(|r| r.lhs).fold(0.0, f64::max);
                    let rhs = checks[0].rhs;
                    if gamma == 0.5 && kappa == 0 && h == 1 {
                        coarse = lhs;
                    }
                    if gamma == 0.5 && kappa == 2 && h == 8 {
                        fine = lhs;
                    }
                    rows.push(CheckRow::le(format!("truncation/m{m:02}/g{gamma}/k{kappa}/h{h}"), lhs, rhs, 0.0));
                }
            }
        }
        rows.push(CheckRow::lt(format!("truncation_decay/m{m:02}"), fine, 0.1 * coarse));
    }
    Ok(rows)
}

/// Mean of `n` independent estimates `g_hat`, one perturbation each.
pub fn mean_estimate<M: FactoredMdp<f64>>(
    mdp: &M,
    policy: &PolicyTable<f64>,
    cfg: &LearnerConfig,
    seed: u64,
    n: usize,
) -> Result<MeanEstimate<f64>> {
    let mut acc = Welford::new(policy.shape().total_dim());
    for r in 0..n as u64 {
        acc.push(&estimate_gradient(mdp, policy, cfg, seed, r)?.grad);
    }
    Ok(acc.finish())
}

/// Agent `i`'s own block of `grad J_hat_i`, concatenated over agents.
pub fn truncated_blocks(model: &JointModel<f64>, policy: &PolicyTable<f64>, kappa: usize, horizon: usize) -> Result<Vec<f64>> {
    let shape = policy.shape();
    let mut out = vec![0.0; shape.total_dim()];
    for i in 0..shape.n_agents() {
        let g = oracle::truncated_gradient(model, policy, i, kappa, horizon)?.grad;
        for k in shape.block(i) {
            out[k] = g[k];
        }
    }
    Ok(out)
}

/// Smoothed-gradient reference blocks, each from its own exact-evaluation stream.
pub fn smoothed_blocks(
    model: &JointModel<f64>,
    policy: &PolicyTable<f64>,
    kappa: usize,
    horizon: usize,
    mu: f64,
    n: usize,
    seed: u64,
) -> Result<MeanEstimate<f64>> {
    let shape = policy.shape();
    let dim = shape.total_dim();
    let mut mean = vec![0.0; dim];
    let mut std_err = vec![0.0; dim];
    for i in 0..shape.n_agents() {
        let mut rng = stream(seed, &[tag::DIAGNOSTIC, 300, i as u64]);
        let est = oracle::smoothed_gradient_reference(model, policy, i, kappa, horizon, mu, n, &mut rng)?;
        for k in shape.block(i) {
            mean[k] = est.mean[k];
            std_err[k] = est.std_err[k];
        }
    }
    Ok(MeanEstimate { mean, std_err, n_samples: n })
}

#[derive(Debug, Clone)]
pub struct IdentitySettings {
    pub perturbations: usize,
    pub reference_samples: usize,
    pub trials: usize,
    pub mu: f64,
    pub kappa: usize,
    pub horizon: usize,
}

impl Default for IdentitySettings {
    fn default() -> Self {
        Self { perturbations: 10_000, reference_samples: 10_000, trials: 10, mu: 0.05, kappa: 1, horizon: 10 }
    }
}

/// Oracle-feedback estimator mean against the smoothed reference and the exact truncated gradient.
pub fn estimator_identity(seed: u64, s: &IdentitySettings) -> Result<Vec<CheckRow>> {
    let mdp = zoo::three_agent_chain::<f64>()?;
    let model = JointModel::build(&mdp, DEFAULT_ENUMERATION_CAP)?;
    let policy = random_policy(model.policy_shape().clone(), seed, 3, 0.5);
    let cfg = LearnerConfig {
        trials: s.trials,
        horizon: s.horizon,
        kappa: s.kappa,
        mu: s.mu,
        feedback: Feedback::Oracle,
        ..LearnerConfig::default()
    };
    let est = mean_estimate(&mdp, &policy, &cfg, seed, s.perturbations)?;
    let reference = smoothed_blocks(&model, &policy, s.kappa, s.horizon, s.mu, s.reference_samples, seed)?;
    let mut rows = Vec::new();
    for k in 0..est.mean.len() {
        let se = est.std_err[k].hypot(reference.std_err[k]);
        rows.push(CheckRow::le(format!("smoothed_identity/theta{k}"), (est.mean[k] - reference.mean[k]).abs(), 3.0 * se, 0.0));
    }
    let exact = truncated_blocks(&model, &policy, s.kappa, s.horizon)?;
    rows.push(CheckRow::lt("truncated_cosine", 0.8, cosine(&est.mean, &exact)));
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct TrendSettings {
    pub replications: usize,
    /// Perturbations averaged per replication in the bias sweep.
    pub bias_perturbations: usize,
    pub bias_trials: usize,
    pub evaluators: Vec<usize>,
    pub trial_counts: Vec<usize>,
    pub mus: Vec<f64>,
    pub variance_evaluators: usize,
}

impl Default for TrendSettings {
    fn default() -> Self {
        Self {
            replications: 50,
            bias_perturbations: 400,
            bias_trials: 10,
            evaluators: vec![10, 100, 1000],
            trial_counts: vec![10, 100, 1000],
            mus: vec![0.3, 0.1, 0.03],
            variance_evaluators: 200,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b).clamp(-1.0, 1.0).acos()
}

/// Mean squared distance of the estimates from their mean.
pub fn empirical_variance(samples: &[Vec<f64>]) -> f64 {
    let n = samples.len() as f64;
    let dim = samples.first().map_or(0, |s| s.len());
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / n;
        }
    }
    samples.iter().map(|s| s.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>()).sum::<f64>() / n
}

fn descending(rows: &mut Vec<CheckRow>, label: &str, keys: &[String], values: &[f64]) {
    for w in 1..values.len() {
        rows.push(CheckRow::lt(format!("{label}/{}<{}", keys[w], keys[w - 1]), values[w], values[w - 1]));
    }
}

/// Bias and variance trends of the preference-feedback estimator, plus the
/// exact truncation bias as neighborhoods and horizons grow.
pub fn estimator_trends(seed: u64, s: &TrendSettings) -> Result<Vec<CheckRow>> {
    let mdp = zoo::three_agent_chain::<f64>()?;
    let model = JointModel::build(&mdp, DEFAULT_ENUMERATION_CAP)?;
    let policy = random_policy(model.policy_shape().clone(), seed, 4, 0.5);
    let exact = oracle::exact_gradient(&model, &policy)?;
    let mut rows = Vec::new();

    // bias angle against grad J, full neighborhoods; paired rollouts keep the
    // rollout noise from swamping the vote noise
    let mut medians = Vec::new();
    for &m in &s.evaluators {
        let cfg = LearnerConfig {
            trials: s.bias_trials,
            evaluators: m,
            kappa: 2,
            common_random_numbers: true,
            ..LearnerConfig::default()
        };
        let angles = (0..s.replications as u64)
            .map(|r| {
                let est = mean_estimate(&mdp, &policy, &cfg, seed.wrapping_add(r << 20), s.bias_perturbations)?;
                Ok(angle(&est.mean, &exact))
            })
            .collect::<Result<Vec<_>>>()?;
        medians.push(median(angles));
    }
    let keys: Vec<String> = s.evaluators.iter().map(|m| format!("m{m}")).collect();
    descending(&mut rows, "bias_angle", &keys, &medians);

    // variance over replications; replication r shares its perturbation and trial streams across settings
    let variance = |trials: usize, mu: f64| -> Result<f64> {
        let cfg = LearnerConfig { trials, mu, evaluators: s.variance_evaluators, ..LearnerConfig::default() };
        let samples = (0..s.replications as u64)
            .map(|r| Ok(estimate_gradient(&mdp, &policy, &cfg, seed, r)?.grad))
            .collect::<Result<Vec<_>>>()?;
        Ok(empirical_variance(&samples))
    };
    let by_k = s.trial_counts.iter().map(|&k| variance(k, 0.1)).collect::<Result<Vec<_>>>()?;
    let keys: Vec<String> = s.trial_counts.iter().map(|k| format!("k{k}")).collect();
    descending(&mut rows, "variance", &keys, &by_k);
    let by_mu = s.mus.iter().map(|&mu| variance(100, mu)).collect::<Result<Vec<_>>>()?;
    for w in 1..s.mus.len() {
        rows.push(CheckRow::lt(
            format!("variance/mu{}>mu{}", s.mus[w], s.mus[w - 1]),
            by_mu[w - 1],
            by_mu[w],
        ));
    }

    // exact truncation bias shrinks with coverage
    let coverage = [(0usize, 1usize), (1, 4), (2, 16)];
    let angles = coverage
        .iter()
        .map(|&(k, h)| Ok(angle(&truncated_blocks(&model, &policy, k, h)?, &exact)))
        .collect::<Result<Vec<_>>>()?;
    let keys: Vec<String> = coverage.iter().map(|(k, h)| format!("k{k}h{h}")).collect();
    descending(&mut rows, "truncation_angle", &keys, &angles);
    Ok(rows)
}

pub const VOTE_SWEEP_EVALUATORS: [usize; 4] = [10, 100, 1000, 10_000];

/// Median `|sigma^{-1}(p_hat) - dr|` against `M`, with `dr` uniform on `[-2, 2]`
/// and the trim level of a unit-reward, `gamma = 0.9`, `H = 10` problem.
pub fn vote_error_medians(seed: u64, evaluators: &[usize], replications: usize) -> Result<Vec<f64>> {
    let link = Link::BradleyTerry;
    let delta: f64 = trim_level(&link, 1.0, 0.9, 10);
    evaluators
        .iter()
        .map(|&m| {
            let mut rng = stream(seed, &[tag::DIAGNOSTIC, 500, m as u64]);
            let errs = (0..replications)
                .map(|_| {
                    let dr: f64 = rng.random_range(-2.0..2.0);
                    let ones = count_votes(link.forward(dr), m, &mut rng)?;
                    Ok((trimmed_inverse(&link, ones as f64 / m as f64, delta)? - dr).abs())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(median(errs))
        })
        .collect()
}

pub fn vote_error_sweep(seed: u64, evaluators: &[usize], replications: usize) -> Result<Vec<CheckRow>> {
    let med = vote_error_medians(seed, evaluators, replications)?;
    let mut rows = Vec::new();
    for w in 1..med.len() {
        rows.push(CheckRow::le(format!("inverse_error/m{}<=m{}", evaluators[w], evaluators[w - 1]), med[w], med[w - 1], 0.0));
    }
    if let (Some(a), Some(b)) = (evaluators.iter().position(|&m| m == 100), evaluators.iter().position(|&m| m == 10_000)) {
        rows.push(CheckRow::lt("inverse_error/m10000_vs_m100", med[b], 0.25 * med[a]));
    }
    Ok(rows)
}
