use serde::{Deserialize, Serialize};

use super::{cell_index, cell_of, check_cell, clamp_to_grid, Cell, MOVES};
use crate::error::{Error, Result};
use crate::graph::AgentGraph;
use crate::mdp::FactoredMdp;
use crate::scalar::Scalar;

/// Reward paid the first time an agent stands on the target.
pub const GOAL_REWARD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceNorm {
    #[default]
    Euclidean,
    Manhattan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridWorldConfig {
    pub width: usize,
    pub height: usize,
    pub target: Cell,
    pub starts: Vec<Cell>,
    pub chi_max: f64,
    pub chi_min: f64,
    /// `r_collision`; zero disables the safety variant.
    pub collision_penalty: f64,
    pub gamma: f64,
    pub norm: DistanceNorm,
}

impl Default for GridWorldConfig {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            target: [4, 0],
            starts: vec![[2, 1], [3, 1], [2, 2], [1, 0]],
            chi_max: 0.1,
            chi_min: 0.02,
            collision_penalty: 0.0,
            gamma: 0.9,
            norm: DistanceNorm::Euclidean,
        }
    }
}

impl GridWorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("environment.width", "grid dimensions must be positive"));
        }
        check_cell("environment.target", self.target, self.width, self.height)?;
        if self.starts.is_empty() {
            return Err(Error::config("environment.starts", "need at least one agent"));
        }
        for &s in &self.starts {
            check_cell("environment.starts", s, self.width, self.height)?;
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.chi_max) || !unit(self.chi_min) || self.chi_min > self.chi_max {
            return Err(Error::config(
                "environment.chi_min",
                "need 0 <= chi_min <= chi_max <= 1",
            ));
        }
        if !(self.collision_penalty >= 0.0 && self.collision_penalty.is_finite()) {
            return Err(Error::config("environment.collision_penalty", "must be a nonnegative number"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("environment.gamma", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn distance(&self, cell: Cell) -> f64 {
        let dx = cell[0].abs_diff(self.target[0]) as f64;
        let dy = cell[1].abs_diff(self.target[1]) as f64;
        match self.norm {
            DistanceNorm::Euclidean => dx.hypot(dy),
            DistanceNorm::Manhattan => dx + dy,
        }
    }

    /// `R` for this configuration.
    pub fn reward_bound(&self) -> f64 {
        let (w, h) = (self.width as f64, self.height as f64);
        let far = match self.norm {
            DistanceNorm::Euclidean => w.hypot(h),
            DistanceNorm::Manhattan => w + h,
        };
        GOAL_REWARD.max(1.0 + far + self.collision_penalty)
    }
}

/// Perturbation probability of `agent` given every agent's current cell index.
///
/// Falls back to `chi_max` for an agent with no graph neighbors.
pub fn gridworld_chi(cfg: &GridWorldConfig, graph: &AgentGraph, agent: usize, cells: &[usize]) -> f64 {
    let neighbors = graph.neighbors(agent);
    if neighbors.is_empty() {
        return cfg.chi_max;
    }
    let target = cell_index(cfg.width, cfg.target);
    let at_goal = neighbors.iter().filter(|&&j| cells[j] == target).count();
    cfg.chi_max - (cfg.chi_max - cfg.chi_min) * at_goal as f64 / neighbors.len() as f64
}

/// Stochastic multi-agent GridWorld.
///
/// Local state is the cell index; each episode tracks per-agent first-visit flags.
#[derive(Debug, Clone)]
pub struct GridWorld {
    cfg: GridWorldConfig,
    graph: AgentGraph,
    target: usize,
}

impl GridWorld {
    pub fn new(cfg: GridWorldConfig, graph: AgentGraph) -> Result<Self> {
        cfg.validate()?;
        if graph.n_agents() != cfg.starts.len() {
            return Err(Error::config(
                "environment.starts",
                format!("{} starts for a graph of {} agents", cfg.starts.len(), graph.n_agents()),
            ));
        }
        let target = cell_index(cfg.width, cfg.target);
        Ok(Self { cfg, graph, target })
    }

    pub fn config(&self) -> &GridWorldConfig {
        &self.cfg
    }

    pub fn n_cells(&self) -> usize {
        self.cfg.width * self.cfg.height
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn start_cells(&self) -> Vec<usize> {
        self.cfg.starts.iter().map(|&c| cell_index(self.cfg.width, c)).collect()
    }

    /// Next-cell distribution for `agent` given every agent's cell index.
    pub fn cell_outcomes(&self, agent: usize, cells: &[usize], action: usize) -> Vec<(usize, f64)> {
        let own = cells[agent];
        if own == self.target {
            return vec![(own, 1.0)];
        }
        let chi = gridworld_chi(&self.cfg, &self.graph, agent, cells);
        let [x, y] = cell_of(self.cfg.width, own);
        let (dx, dy) = MOVES[action];
        let (bx, by) = (x as i64 + dx, y as i64 + dy);
        let noise = [((0, 0), 1.0 - chi), ((1, 0), chi / 4.0), ((-1, 0), chi / 4.0), ((0, 1), chi / 4.0), ((0, -1), chi / 4.0)];
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(5);
        for ((ex, ey), p) in noise {
            if p <= 0.0 {
                continue;
            }
            let c = cell_index(self.cfg.width, clamp_to_grid(bx + ex, by + ey, self.cfg.width, self.cfg.height));
            match out.iter_mut().find(|(k, _)| *k == c) {
                Some(slot) => slot.1 += p,
                None => out.push((c, p)),
            }
        }
        out.sort_by_key(|&(c, _)| c);
        out
    }

    /// Reward of `agent` standing in `cells[agent]`, given whether it already visited the target.
    pub fn cell_reward(&self, agent: usize, cells: &[usize], visited: bool) -> f64 {
        let own = cells[agent];
        if own == self.target {
            return if visited { 0.0 } else { GOAL_REWARD };
        }
        let mut r = -1.0 - self.cfg.distance(cell_of(self.cfg.width, own));
        if self.cfg.collision_penalty > 0.0
            && cells.iter().enumerate().any(|(j, &c)| j != agent && c == own)
        {
            r -= self.cfg.collision_penalty;
        }
        r
    }
}

impl<S: Scalar> FactoredMdp<S> for GridWorld {
    /// Per-agent "already reached the target" flags.
    type Bookkeeping = Vec<bool>;

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
        self.cell_outcomes(agent, state, action)
            .into_iter()
            .map(|(c, p)| (c, S::of(p)))
            .collect()
    }

    fn begin_episode(&self, initial: &[usize]) -> Vec<bool> {
        vec![false; initial.len()]
    }

    fn rewards(&self, state: &[usize], _action: &[usize], _next: &[usize], book: &Vec<bool>, out: &mut [S]) {
        for (i, r) in out.iter_mut().enumerate() {
            *r = S::of(self.cell_reward(i, state, book[i]));
        }
    }

    fn advance(&self, book: &mut Vec<bool>, state: &[usize], _action: &[usize], _next: &[usize]) {
        for (flag, &c) in book.iter_mut().zip(state) {
            *flag |= c == self.target;
        }
    }
}

/// GridWorld with each agent's first-visit flag folded into its local state.
///
/// Local state `cell + visited * n_cells`; the policy still observes only the
/// cell. Rewards are Markov in the augmented state, so small instances can be
/// solved exactly.
#[derive(Debug, Clone)]
pub struct AugmentedGridWorld {
    inner: GridWorld,
}

impl AugmentedGridWorld {
    pub fn new(inner: GridWorld) -> Self {
        Self { inner }
    }

    pub fn inner(&self) -> &GridWorld {
        &self.inner
    }

    fn split(&self, state: &[usize]) -> Vec<usize> {
        let n = self.inner.n_cells();
        state.iter().map(|&s| s % n).collect()
    }
}

impl<S: Scalar> FactoredMdp<S> for AugmentedGridWorld {
    type Bookkeeping = ();

    fn graph(&self) -> &AgentGraph {
        &self.inner.graph
    }

    fn n_states(&self, _agent: usize) -> usize {
        2 * self.inner.n_cells()
    }

    fn n_actions(&self, _agent: usize) -> usize {
        MOVES.len()
    }

    fn n_observations(&self, _agent: usize) -> usize {
        self.inner.n_cells()
    }

    fn observe(&self, _agent: usize, local_state: usize) -> usize {
        local_state % self.inner.n_cells()
    }

    fn gamma(&self) -> S {
        S::of(self.inner.cfg.gamma)
    }

    fn reward_bound(&self) -> S {
        S::of(self.inner.cfg.reward_bound())
    }

    fn initial_distribution(&self) -> Vec<(Vec<usize>, S)> {
        vec![(self.inner.start_cells(), S::one())]
    }

    fn transition(&self, agent: usize, state: &[usize], action: usize) -> Vec<(usize, S)> {
        let n = self.inner.n_cells();
        let cells = self.split(state);
        let visited = state[agent] >= n || cells[agent] == self.inner.target;
        let offset = if visited { n } else { 0 };
        self.inner
            .cell_outcomes(agent, &cells, action)
            .into_iter()
            .map(|(c, p)| (c + offset, S::of(p)))
            .collect()
    }

    fn begin_episode(&self, _initial: &[usize]) {}

    fn rewards(&self, state: &[usize], _action: &[usize], _next: &[usize], _book: &(), out: &mut [S]) {
        let n = self.inner.n_cells();
        let cells = self.split(state);
        for (i, r) in out.iter_mut().enumerate() {
            *r = S::of(self.inner.cell_reward(i, &cells, state[i] >= n));
        }
    }

    fn advance(&self, _book: &mut (), _state: &[usize], _action: &[usize], _next: &[usize]) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn default_grid() -> GridWorld {
        GridWorld::new(GridWorldConfig::default(), AgentGraph::chain(4).unwrap()).unwrap()
    }

    #[test]
    fn chi_examples() {
        let g = default_grid();
        let t = g.target_index();
        let cfg = g.config();
        // agent 1 has neighbors 0 and 2
        assert!((gridworld_chi(cfg, &g.graph, 1, &[0, 0, 0, 0]) - 0.1).abs() < 1e-15);
        assert!((gridworld_chi(cfg, &g.graph, 1, &[t, 0, t, 0]) - 0.02).abs() < 1e-15);
        assert!((gridworld_chi(cfg, &g.graph, 1, &[t, 0, 0, 0]) - 0.06).abs() < 1e-15);
        let lone = GridWorld::new(
            GridWorldConfig { starts: vec![[0, 0]], ..Default::default() },
            AgentGraph::isolated(1).unwrap(),
        )
        .unwrap();
        assert_eq!(gridworld_chi(lone.config(), &lone.graph, 0, &[0]), 0.1);
    }

    #[test]
    fn goal_is_absorbing() {
        let g = default_grid();
        let t = g.target_index();
        for a in 0..5 {
            assert_eq!(g.cell_outcomes(0, &[t, 0, 0, 0], a), vec![(t, 1.0)]);
        }
    }

    #[test]
    fn noiseless_move_up() {
        let cfg = GridWorldConfig { chi_max: 0.0, chi_min: 0.0, ..Default::default() };
        let g = GridWorld::new(cfg, AgentGraph::chain(4).unwrap()).unwrap();
        let cells = [cell_index(5, [2, 2]), 0, 0, 0];
        assert_eq!(g.cell_outcomes(0, &cells, 0), vec![(cell_index(5, [2, 3]), 1.0)]);
    }

    #[test]
    fn interior_noise_law() {
        let g = default_grid();
        let cells = [cell_index(5, [2, 2]), 0, 0, 0];
        let out = g.cell_outcomes(0, &cells, 4);
        assert_eq!(out.len(), 5);
        let total: f64 = out.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let stay = out.iter().find(|p| p.0 == cells[0]).unwrap().1;
        assert!((stay - 0.9).abs() < 1e-15);
    }

    #[test]
    fn corner_clamping_merges_outcomes() {
        let g = default_grid();
        // (0,0) moving left reaches (-1,0) before noise; clamping happens once at the end
        let out = g.cell_outcomes(0, &[0, 0, 0, 0], 2);
        let stay = out.iter().find(|p| p.0 == 0).unwrap().1;
        assert!((stay - 0.975).abs() < 1e-12);
        assert_eq!(out, vec![(0, stay), (cell_index(5, [0, 1]), 0.025)]);
    }

    #[test]
    fn reward_examples() {
        let g = default_grid();
        let t = g.target_index();
        assert_eq!(g.cell_reward(0, &[t, 0, 0, 0], false), 10.0);
        assert_eq!(g.cell_reward(0, &[t, 0, 0, 0], true), 0.0);
        let s = cell_index(5, [2, 1]);
        assert!((g.cell_reward(0, &[s, 0, 0, 0], false) - (-1.0 - 5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn collision_penalty_except_at_target() {
        let cfg = GridWorldConfig { collision_penalty: 2.0, ..Default::default() };
        let g = GridWorld::new(cfg, AgentGraph::chain(4).unwrap()).unwrap();
        let t = g.target_index();
        let s = cell_index(5, [4, 1]);
        assert!((g.cell_reward(0, &[s, s, 0, 1], false) - (-2.0 - 2.0)).abs() < 1e-12);
        assert_eq!(g.cell_reward(0, &[t, t, 0, 1], false), 10.0);
    }

    #[test]
    fn augmented_matches_flagged_rewards() {
        let cfg = GridWorldConfig { starts: vec![[3, 0]], ..Default::default() };
        let g = GridWorld::new(cfg, AgentGraph::isolated(1).unwrap()).unwrap();
        let aug = AugmentedGridWorld::new(g.clone());
        let mut rng = stream(5, &[]);
        for _ in 0..50 {
            let mut plain: Vec<usize> = FactoredMdp::<f64>::initial_distribution(&g)[0].0.clone();
            let mut book = FactoredMdp::<f64>::begin_episode(&g, &plain);
            let mut lifted = plain.clone();
            for _ in 0..12 {
                let a = vec![rng.random_range(0..5)];
                let mut r0 = [0.0f64];
                let mut r1 = [0.0f64];
                g.rewards(&plain, &a, &plain, &book, &mut r0);
                aug.rewards(&lifted, &a, &lifted, &(), &mut r1);
                assert_eq!(r0, r1);
                assert_eq!(FactoredMdp::<f64>::observe(&aug, 0, lifted[0]), plain[0]);
                let u: f64 = rng.random();
                let next_plain = pick(&FactoredMdp::<f64>::transition(&g, 0, &plain, a[0]), u);
                let next_lifted = pick(&FactoredMdp::<f64>::transition(&aug, 0, &lifted, a[0]), u);
                FactoredMdp::<f64>::advance(&g, &mut book, &plain, &a, &[next_plain]);
                plain = vec![next_plain];
                lifted = vec![next_lifted];
                assert_eq!(lifted[0] >= 25, book[0]);
            }
        }
    }

    fn pick(dist: &[(usize, f64)], u: f64) -> usize {
        let mut acc = 0.0;
        for &(s, p) in dist {
            acc += p;
            if u < acc {
                return s;
            }
        }
        dist.last().unwrap().0
    }

    #[test]
    fn bad_configs() {
        let bad_target = GridWorldConfig { target: [5, 0], ..Default::default() };
        assert!(bad_target.validate().is_err());
        let bad_chi = GridWorldConfig { chi_min: 0.2, ..Default::default() };
        assert!(bad_chi.validate().is_err());
        assert!(GridWorld::new(GridWorldConfig::default(), AgentGraph::chain(3).unwrap()).is_err());
    }
}
