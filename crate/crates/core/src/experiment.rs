//! Runs a configured experiment over its seeds and writes the artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.toml                 resolved configuration
//! summary.json                final return per seed, mean and sample std
//! seed_<s>/metrics.csv
//! seed_<s>/checkpoint_<t>.json
//! seed_<s>/final.json
//! seed_<s>/trajectories.jsonl (only when trajectory_rollouts > 0)
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{EnvironmentConfig, EvaluationMode, ExperimentConfig, Precision};
use crate::envs::{AugmentedGridWorld, GridWorld, PredatorPrey};
use crate::error::{Error, Result};
use crate::eval::{horizon_for_tolerance, ExactEvaluator, MonteCarloEvaluator, PolicyEvaluator};
use crate::learner::{train, MetricRow, RunOptions, METRICS_HEADER};
use crate::mdp::{FactoredMdp, DEFAULT_ENUMERATION_CAP};
use crate::oracle::JointModel;
use crate::policy::{PolicyShape, PolicyTable};
use crate::rng::{stream, tag};
use crate::rollout::rollout_joint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub initial_return: f64,
    pub final_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub evaluator: String,
    pub iterations: usize,
    pub runs: Vec<SeedSummary>,
    pub mean_final_return: f64,
    /// Sample standard deviation; zero for a single seed.
    pub std_final_return: f64,
}

impl Summary {
    pub fn from_runs(name: &str, evaluator: &str, iterations: usize, runs: Vec<SeedSummary>) -> Self {
        let finals: Vec<f64> = runs.iter().map(|r| r.final_return).collect();
        let (mean, std) = mean_std(&finals);
        Self {
            name: name.to_string(),
            evaluator: evaluator.to_string(),
            iterations,
            runs,
            mean_final_return: mean,
            std_final_return: std,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}: final return {:.4} +- {:.4} over {} seeds ({} evaluator)\n",
            if self.name.is_empty() { "experiment" } else { &self.name },
            self.mean_final_return, self.std_final_return, self.runs.len(), self.evaluator);
        for r in &self.runs {
            s.push_str(&format!("  seed {}: {:.4} -> {:.4}\n", r.seed, r.initial_return, r.final_return));
        }
        s
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Reads back a metrics file written by [`run_experiment`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::arg(format!("{} does not start with the metrics header", path.display())));
    }
    lines.map(MetricRow::parse_csv_line).collect()
}

/// Trains every seed of `cfg`, writing artifacts under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    let summary = match cfg.precision {
        Precision::F64 => run_typed::<f64>(cfg, out)?,
        Precision::F32 => run_typed::<f32>(cfg, out)?,
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

fn run_typed<S: Scalar>(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let graph = cfg.build_graph()?;
    match &cfg.environment {
        EnvironmentConfig::Gridworld(g) => {
            let env = GridWorld::new(g.clone(), graph)?;
            let model = if env_is_small(g.starts.len(), cfg.evaluation.mode) {
                Some(JointModel::<S>::build(&AugmentedGridWorld::new(env.clone()), DEFAULT_ENUMERATION_CAP)?)
            } else {
                None
            };
            run_env(&env, model, cfg, out)
        }
        EnvironmentConfig::PredatorPrey(p) => {
            let env = PredatorPrey::new(p.clone(), graph)?;
            run_env::<S, _>(&env, None, cfg, out)
        }
        EnvironmentConfig::Zoo(z) => {
            let mdp = z.model.build::<S>()?;
            let model = match cfg.evaluation.mode {
                EvaluationMode::MonteCarlo => None,
                _ => Some(JointModel::build(&mdp, DEFAULT_ENUMERATION_CAP)?),
            };
            run_env(&mdp, model, cfg, out)
        }
    }
}

fn env_is_small(n_agents: usize, mode: EvaluationMode) -> bool {
    // the joint GridWorld space is enumerable only for one agent
    n_agents == 1 && mode != EvaluationMode::MonteCarlo
}

fn run_env<S, M>(mdp: &M, model: Option<JointModel<S>>, cfg: &ExperimentConfig, out: &Path) -> Result<Summary>
where
    S: Scalar,
    M: FactoredMdp<S>,
{
    if cfg.evaluation.mode == EvaluationMode::Exact && model.is_none() {
        return Err(Error::config(
            "evaluation.mode",
            "exact evaluation needs an enumerable model (zoo or single-agent GridWorld)",
        ));
    }
    let shape = PolicyShape::for_mdp(mdp)?;
    let initial = match &cfg.initial_policy {
        Some(path) => {
            let p = PolicyTable::<S>::load(path)?;
            if p.shape() != &shape {
                return Err(Error::config("initial_policy", "policy shape does not match the environment"));
            }
            p
        }
        None => PolicyTable::zeros(shape),
    };
    let exact = model.map(|m| ExactEvaluator { model: m });
    let evaluator_name = if exact.is_some() { "exact" } else { "monte_carlo" };
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mc = MonteCarloEvaluator {
            mdp,
            rollouts: cfg.evaluation.rollouts,
            horizon: horizon_for_tolerance(mdp.gamma().as_f64(), cfg.evaluation.tolerance),
            seed: cfg.evaluation.seed.unwrap_or(seed),
        };
        let evaluator: &dyn PolicyEvaluator<S> = match &exact {
            Some(e) => e,
            None => &mc,
        };
        runs.push(run_seed(mdp, initial.clone(), cfg, evaluator, seed, out)?);
    }
    Ok(Summary::from_runs(&cfg.name, evaluator_name, cfg.learner.iterations, runs))
}

fn run_seed<S, M>(
    mdp: &M,
    initial: PolicyTable<S>,
    cfg: &ExperimentConfig,
    evaluator: &dyn PolicyEvaluator<S>,
    seed: u64,
    out: &Path,
) -> Result<SeedSummary>
where
    S: Scalar,
    M: FactoredMdp<S>,
{
    let dir = seed_dir(out, seed);
    fs::create_dir_all(&dir)?;
    let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    writeln!(metrics, "{METRICS_HEADER}")?;
    let opts = RunOptions {
        seed,
        record_wall_time: cfg.output.record_wall_time,
        metric_interval: cfg.output.metric_interval,
    };
    let every = cfg.output.checkpoint_interval;
    let outcome = train(mdp, initial, &cfg.learner, evaluator, opts, |t, row, policy| {
        if let Some(row) = row {
            writeln!(metrics, "{}", row.csv_line())?;
        }
        if every > 0 && (t + 1) % every == 0 {
            policy.save(&dir.join(format!("checkpoint_{:05}.json", t + 1)))?;
        }
        Ok(())
    })?;
    metrics.flush()?;
    outcome.policy.save(&dir.join("final.json"))?;

    if cfg.output.trajectory_rollouts > 0 {
        let mut w = BufWriter::new(File::create(dir.join("trajectories.jsonl"))?);
        for r in 0..cfg.output.trajectory_rollouts {
            let mut rng = stream(seed, &[tag::TRAJECTORY, r as u64]);
            rollout_joint(mdp, &outcome.policy, cfg.learner.horizon, &mut rng)?.write_jsonl(r, &mut w)?;
        }
        w.flush()?;
    }

    let final_return = outcome.rows.last().map_or(outcome.initial_return, |r| r.ret);
    Ok(SeedSummary { seed, initial_return: outcome.initial_return, final_return })
}
