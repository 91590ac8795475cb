//! Experiment configuration: TOML schema, validation and named presets.
//!
//! ```toml
//! name = "gridworld_desk"
//! seeds = [0, 1, 2, 3, 4]
//! precision = "f64"            # or "f32"
//!
//! [environment]
//! kind = "gridworld"           # "gridworld" | "predator_prey" | "zoo"
//! width = 5
//! # ... every environment parameter by name
//!
//! [graph]                      # omitted: chain over the agents
//! preset = "chain"             # or: edges = [[0, 1], [1, 2]]   (0-indexed)
//!
//! [learner]
//! iterations = 200
//! trials = 100
//! evaluators = 200
//! horizon = 10
//! kappa = 1
//! mu = 0.1
//! alpha = 0.1
//! feedback = "preference"      # or "oracle"
//! common_random_numbers = false
//! link = { kind = "bradley_terry" }
//!
//! [evaluation]
//! mode = "auto"                # "auto" | "exact" | "monte_carlo"
//! rollouts = 100
//! tolerance = 1e-4
//!
//! [output]
//! directory = "runs/gridworld_desk"
//! checkpoint_interval = 50     # 0 disables intermediate checkpoints
//! metric_interval = 1
//! record_wall_time = false
//! trajectory_rollouts = 0      # rollouts of the final policy dumped as JSON lines
//! ```
//!
//! Unknown keys are rejected at every level.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{GridWorldConfig, PredatorPreyConfig};
use crate::error::{Error, Result};
use crate::graph::{AgentGraph, GraphSpec};
use crate::learner::LearnerConfig;
use crate::mdp::TabularFactoredMdp;
use crate::scalar::Scalar;
use crate::zoo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZooModel {
    Bandit,
    TwoStateChain,
    ThreeAgentChain,
}

impl ZooModel {
    pub fn build<S: Scalar>(self) -> Result<TabularFactoredMdp<S>> {
        match self {
            ZooModel::Bandit => zoo::bandit(),
            ZooModel::TwoStateChain => zoo::two_state_chain(),
            ZooModel::ThreeAgentChain => zoo::three_agent_chain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooConfig {
    pub model: ZooModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    Gridworld(GridWorldConfig),
    PredatorPrey(PredatorPreyConfig),
    Zoo(ZooConfig),
}

impl EnvironmentConfig {
    pub fn n_agents(&self) -> usize {
        match self {
            EnvironmentConfig::Gridworld(g) => g.starts.len(),
            EnvironmentConfig::PredatorPrey(p) => p.predator_starts.len(),
            EnvironmentConfig::Zoo(z) => match z.model {
                ZooModel::ThreeAgentChain => 3,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    /// Exact when the joint model is enumerable (zoo, single-agent GridWorld), else Monte Carlo.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub mode: EvaluationMode,
    pub rollouts: usize,
    /// Monte-Carlo horizon is the smallest `H` with `gamma^H` below this.
    pub tolerance: f64,
    /// Seed of the evaluation streams; the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { mode: EvaluationMode::Auto, rollouts: 100, tolerance: 1e-4, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub checkpoint_interval: usize,
    pub metric_interval: usize,
    pub record_wall_time: bool,
    pub trajectory_rollouts: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs"),
            checkpoint_interval: 50,
            metric_interval: 1,
            record_wall_time: false,
            trajectory_rollouts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub precision: Precision,
    /// Policy file to start from instead of all-zero logits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_policy: Option<PathBuf>,
    pub environment: EnvironmentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// The agent network; a chain when no graph section is given.
    pub fn build_graph(&self) -> Result<AgentGraph> {
        let n = self.environment.n_agents();
        match &self.graph {
            Some(spec) => AgentGraph::from_spec(n, spec),
            None => AgentGraph::chain(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        match &self.environment {
            EnvironmentConfig::Gridworld(g) => g.validate()?,
            EnvironmentConfig::PredatorPrey(p) => p.validate()?,
            EnvironmentConfig::Zoo(_) => {
                if self.graph.is_some() {
                    return Err(Error::config("graph", "zoo models carry their own graph"));
                }
            }
        }
        self.build_graph()?;
        self.learner.validate()?;
        let e = &self.evaluation;
        if e.rollouts == 0 {
            return Err(Error::config("evaluation.rollouts", "must be at least 1"));
        }
        if !(e.tolerance > 0.0 && e.tolerance < 1.0) {
            return Err(Error::config("evaluation.tolerance", "must lie in (0, 1)"));
        }
        if self.output.metric_interval == 0 {
            return Err(Error::config("output.metric_interval", "must be at least 1"));
        }
        Ok(())
    }
}

pub const PRESETS: [&str; 8] = [
    "gridworld_full",
    "gridworld_desk",
    "gridworld_safety",
    "gridworld_safety_desk",
    "predator_prey_full",
    "predator_prey_desk",
    "zoo_two_state",
    "zoo_three_agent",
];

/// Collision penalty of the safety presets.
pub const SAFETY_COLLISION_PENALTY: f64 = 2.0;

fn experiment(name: &str, environment: EnvironmentConfig, learner: LearnerConfig, seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        seeds,
        precision: Precision::F64,
        initial_policy: None,
        environment,
        graph: None,
        learner,
        evaluation: EvaluationConfig::default(),
        output: OutputConfig { directory: PathBuf::from("runs").join(name), ..OutputConfig::default() },
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let five: Vec<u64> = (0..5).collect();
    let full_gw = LearnerConfig { evaluators: 1000, trials: 500, horizon: 20, ..LearnerConfig::default() };
    let desk_gw = LearnerConfig::default();
    let safety = GridWorldConfig { collision_penalty: SAFETY_COLLISION_PENALTY, ..GridWorldConfig::default() };
    let gw = |c: GridWorldConfig| EnvironmentConfig::Gridworld(c);
    let cfg = match name {
        "gridworld_full" => experiment(name, gw(GridWorldConfig::default()), full_gw, five),
        "gridworld_desk" => experiment(name, gw(GridWorldConfig::default()), desk_gw, five),
        "gridworld_safety" => experiment(name, gw(safety), full_gw, five),
        "gridworld_safety_desk" => experiment(name, gw(safety), desk_gw, five),
        "predator_prey_full" => experiment(
            name,
            EnvironmentConfig::PredatorPrey(PredatorPreyConfig::default()),
            LearnerConfig { evaluators: 200, trials: 100, horizon: 50, kappa: 1, ..LearnerConfig::default() },
            five,
        ),
        "predator_prey_desk" => experiment(
            name,
            EnvironmentConfig::PredatorPrey(PredatorPreyConfig::default()),
            LearnerConfig { evaluators: 200, trials: 20, horizon: 20, iterations: 50, ..LearnerConfig::default() },
            vec![0, 1],
        ),
        "zoo_two_state" => experiment(
            name,
            EnvironmentConfig::Zoo(ZooConfig { model: ZooModel::TwoStateChain }),
            LearnerConfig { iterations: 100, trials: 20, evaluators: 100, horizon: 20, ..LearnerConfig::default() },
            five,
        ),
        "zoo_three_agent" => experiment(
            name,
            EnvironmentConfig::Zoo(ZooConfig { model: ZooModel::ThreeAgentChain }),
            LearnerConfig { iterations: 100, trials: 20, evaluators: 100, horizon: 10, ..LearnerConfig::default() },
            five,
        ),
        other => {
            return Err(Error::Argument(format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", "))))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `"0..4"` (inclusive) or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("cannot parse `{text}`; use `a..b` or `a,b,c`"));
    let t = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = t.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        t.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}
