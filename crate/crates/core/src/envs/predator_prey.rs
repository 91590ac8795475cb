use serde::{Deserialize, Serialize};

use super::{cell_index, cell_of, check_cell, clamp_to_grid, manhattan, Cell, MOVES};
use crate::error::{Error, Result};
use crate::graph::AgentGraph;
use crate::mdp::FactoredMdp;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredatorPreyConfig {
    pub width: usize,
    pub height: usize,
    pub predator_starts: Vec<Cell>,
    pub prey: Vec<Cell>,
    pub obstacles: Vec<Cell>,
    pub r_time: f64,
    pub r_capture: f64,
    pub alpha_p: f64,
    pub gamma: f64,
}

fn cells(list: &[(usize, usize)]) -> Vec<Cell> {
    list.iter().map(|&(x, y)| [x, y]).collect()
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        Self {
            width: 8,
            height: 8,
            predator_starts: cells(&[
                (4, 4), (5, 7), (4, 3), (1, 5), (4, 4), (5, 3), (6, 4), (4, 0), (7, 3), (5, 2),
                (0, 5), (1, 0), (5, 2), (1, 4), (1, 0), (2, 1), (5, 0), (4, 4), (3, 1), (6, 0),
            ]),
            prey: cells(&[
                (3, 2), (1, 3), (7, 0), (3, 0), (4, 5), (2, 0), (7, 5), (4, 2), (3, 4), (3, 5),
            ]),
            obstacles: cells(&[
                (0, 1), (5, 4), (6, 6), (7, 6), (6, 3), (7, 4), (3, 6), (2, 5), (2, 4), (6, 5),
            ]),
            r_time: 1.0,
            r_capture: 1.0,
            alpha_p: 0.5,
            gamma: 0.9,
        }
    }
}

impl PredatorPreyConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width, self.height);
        if w == 0 || h == 0 {
            return Err(Error::config("environment.width", "grid dimensions must be positive"));
        }
        if self.predator_starts.is_empty() {
            return Err(Error::config("environment.predator_starts", "need at least one predator"));
        }
        for &c in &self.obstacles {
            check_cell("environment.obstacles", c, w, h)?;
        }
        for (field, list) in [("environment.predator_starts", &self.predator_starts), ("environment.prey", &self.prey)] {
            for &c in list {
                check_cell(field, c, w, h)?;
                if self.obstacles.contains(&c) {
                    return Err(Error::config(field, format!("cell ({}, {}) is an obstacle", c[0], c[1])));
                }
            }
        }
        for (k, p) in self.prey.iter().enumerate() {
            if self.prey[..k].contains(p) {
                return Err(Error::config("environment.prey", format!("duplicate prey at ({}, {})", p[0], p[1])));
            }
        }
        for (name, x) in [("r_time", self.r_time), ("r_capture", self.r_capture), ("alpha_p", self.alpha_p)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::config(format!("environment.{name}"), "must be a nonnegative number"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("environment.gamma", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `r_time + r_capture + alpha_p`: shaping changes by at most one cell per step.
    pub fn reward_bound(&self) -> f64 {
        self.r_time + self.r_capture + self.alpha_p
    }
}

/// Which prey are still on the board.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreyStatus {
    pub remaining: Vec<bool>,
}

/// Deterministic predator-prey pursuit on a grid with static prey and obstacles.
#[derive(Debug, Clone)]
pub struct PredatorPrey {
    cfg: PredatorPreyConfig,
    graph: AgentGraph,
    blocked: Vec<bool>,
    prey_cells: Vec<usize>,
}

impl PredatorPrey {
    pub fn new(cfg: PredatorPreyConfig, graph: AgentGraph) -> Result<Self> {
        cfg.validate()?;
        if graph.n_agents() != cfg.predator_starts.len() {
            return Err(Error::config(
                "environment.predator_starts",
                format!("{} starts for a graph of {} agents", cfg.predator_starts.len(), graph.n_agents()),
            ));
        }
        let mut blocked = vec![false; cfg.width * cfg.height];
        for &c in &cfg.obstacles {
            blocked[cell_index(cfg.width, c)] = true;
        }
        let prey_cells = cfg.prey.iter().map(|&c| cell_index(cfg.width, c)).collect();
        Ok(Self { cfg, graph, blocked, prey_cells })
    }

    pub fn config(&self) -> &PredatorPreyConfig {
        &self.cfg
    }

    pub fn n_cells(&self) -> usize {
        self.cfg.width * self.cfg.height
    }

    pub fn is_obstacle(&self, cell: usize) -> bool {
        self.blocked[cell]
    }

    pub fn prey_cells(&self) -> &[usize] {
        &self.prey_cells
    }

    pub fn next_cell(&self, cell: usize, action: usize) -> usize {
        let [x, y] = cell_of(self.cfg.width, cell);
        let (dx, dy) = MOVES[action];
        let next = cell_index(
            self.cfg.width,
            clamp_to_grid(x as i64 + dx, y as i64 + dy, self.cfg.width, self.cfg.height),
        );
        if self.blocked[next] {
            cell
        } else {
            next
        }
    }

    /// Manhattan distance to the nearest prey still in `remaining`.
    pub fn nearest_prey(&self, cell: usize, remaining: &[bool]) -> Option<usize> {
        let here = cell_of(self.cfg.width, cell);
        self.prey_cells
            .iter()
            .zip(remaining)
            .filter(|(_, &alive)| alive)
            .map(|(&p, _)| manhattan(here, cell_of(self.cfg.width, p)))
            .min()
    }

    /// Per-agent rewards for moving `state -> next` with `remaining` prey at the start of the step.
    pub fn step_rewards(&self, state: &[usize], next: &[usize], remaining: &[bool]) -> Vec<f64> {
        let captors: Vec<usize> = self
            .prey_cells
            .iter()
            .map(|&p| next.iter().filter(|&&c| c == p).count())
            .collect();
        (0..state.len())
            .map(|i| {
                let mut r = -self.cfg.r_time;
                for (p, &cell) in self.prey_cells.iter().enumerate() {
                    if remaining[p] && next[i] == cell {
                        r += self.cfg.r_capture / captors[p] as f64;
                    }
                }
                if let (Some(before), Some(after)) =
                    (self.nearest_prey(state[i], remaining), self.nearest_prey(next[i], remaining))
                {
                    r += self.cfg.alpha_p * (before as f64 - after as f64);
                }
                r
            })
            .collect()
    }

    pub fn start_cells(&self) -> Vec<usize> {
        self.cfg.predator_starts.iter().map(|&c| cell_index(self.cfg.width, c)).collect()
    }
}

impl<S: Scalar> FactoredMdp<S> for PredatorPrey {
    type Bookkeeping = PreyStatus;

    fn graph(&self) -> &AgentGraph {
        &self.graph
    }

    fn n_states(&self, _agent: usize) -> usize {
        self.n_cells()
    }

    fn n_actions(&self, _agent: usize) -> usize {
        MOVES.len()
    }

    fn gamma(&self) -> S {
        S::of(self.cfg.gamma)
    }

    fn reward_bound(&self) -> S {
        S::of(self.cfg.reward_bound())
    }

    fn initial_distribution(&self) -> Vec<(Vec<usize>, S)> {
        vec![(self.start_cells(), S::one())]
    }

    fn transition(&self, agent: usize, state: &[usize], action: usize) -> Vec<(usize, S)> {
        vec![(self.next_cell(state[agent], action), S::one())]
    }

    fn begin_episode(&self, _initial: &[usize]) -> PreyStatus {
        PreyStatus { remaining: vec![true; self.prey_cells.len()] }
    }

    fn rewards(&self, state: &[usize], _action: &[usize], next: &[usize], book: &PreyStatus, out: &mut [S]) {
        for (o, r) in out.iter_mut().zip(self.step_rewards(state, next, &book.remaining)) {
            *o = S::of(r);
        }
    }

    fn advance(&self, book: &mut PreyStatus, _state: &[usize], _action: &[usize], next: &[usize]) {
        for (alive, &p) in book.remaining.iter_mut().zip(&self.prey_cells) {
            if *alive && next.contains(&p) {
                *alive = false;
            }
        }
    }
}
