//! Undirected agent network and κ-hop neighborhood queries.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable undirected graph over agents `0..n`.
///
/// All-pairs hop distances are computed once by breadth-first search at
/// construction, and every κ-hop neighborhood up to the agent's eccentricity
/// is materialized as a sorted list. Queries beyond the eccentricity return
/// the agent's whole connected component.
#[derive(Debug, Clone)]
pub struct AgentGraph {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    distance: Vec<Vec<Option<usize>>>,
    // khop[i][k] = sorted agents within k hops of i, for k = 0..=eccentricity(i)
    khop: Vec<Vec<Vec<usize>>>,
    complement: Vec<Vec<Vec<usize>>>,
}

/// Serializable description of a graph, used by experiment configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub struct GraphSpec {
    /// Named topology; currently only `"chain"`.
    #[serde(default)]
    pub preset: Option<String>,
    /// Explicit 0-indexed edge list.
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl AgentGraph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Rejects self-loops, duplicate edges (in either orientation) and
    /// endpoints outside `0..n_agents`.
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::arg("graph needs at least one agent"));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n_agents || b >= n_agents {
                return Err(Error::arg(format!(
                    "edge ({a}, {b}) references an agent outside 0..{n_agents}"
                )));
            }
            if a == b {
                return Err(Error::arg(format!("self-loop on agent {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !set.insert(key) {
                return Err(Error::arg(format!("duplicate edge ({a}, {b})")));
            }
        }

        let mut adjacency = vec![Vec::new(); n_agents];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }

        let distance: Vec<Vec<Option<usize>>> =
            (0..n_agents).map(|src| bfs(&adjacency, src)).collect();

        let mut khop = Vec::with_capacity(n_agents);
        let mut complement = Vec::with_capacity(n_agents);
        for dist in &distance {
            let ecc = dist.iter().flatten().copied().max().unwrap_or(0);
            let lists: Vec<Vec<usize>> = (0..=ecc)
                .map(|k| (0..n_agents).filter(|&j| dist[j].is_some_and(|d| d <= k)).collect())
                .collect();
            let outside: Vec<Vec<usize>> = (0..=ecc)
                .map(|k| (0..n_agents).filter(|&j| !dist[j].is_some_and(|d| d <= k)).collect())
                .collect();
            khop.push(lists);
            complement.push(outside);
        }

        Ok(Self {
            n_agents,
            edges: set,
            adjacency,
            distance,
            khop,
            complement,
        })
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn chain(n_agents: usize) -> Result<Self> {
        let edges: Vec<(usize, usize)> = (1..n_agents).map(|i| (i - 1, i)).collect();
        Self::new(n_agents, &edges)
    }

    /// Graph with no edges.
    pub fn isolated(n_agents: usize) -> Result<Self> {
        Self::new(n_agents, &[])
    }

    pub fn from_spec(n_agents: usize, spec: &GraphSpec) -> Result<Self> {
        match (spec.preset.as_deref(), spec.edges.as_ref()) {
            (Some(_), Some(_)) => Err(Error::config(
                "graph",
                "set either `preset` or `edges`, not both",
            )),
            (Some("chain"), None) => Self::chain(n_agents),
            (Some(other), None) => Err(Error::config(
                "graph.preset",
                format!("unknown preset `{other}` (expected `chain`)"),
            )),
            (None, Some(edges)) => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                Self::new(n_agents, &pairs).map_err(|e| Error::config("graph.edges", e.to_string()))
            }
            (None, None) => Err(Error::config("graph", "missing `preset` or `edges`")),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Direct neighbors of `agent`, excluding the agent itself.
    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }

    /// Hop distance, or `None` when the agents lie in different components.
    pub fn distance(&self, a: usize, b: usize) -> Option<usize> {
        self.distance[a][b]
    }

    /// Largest finite hop distance in the graph.
    pub fn diameter(&self) -> usize {
        self.khop.iter().map(|l| l.len() - 1).max().unwrap_or(0)
    }

    fn check(&self, agent: usize) -> Result<()> {
        if agent >= self.n_agents {
            Err(Error::arg(format!(
                "agent {agent} out of range for a graph of {} agents",
                self.n_agents
            )))
        } else {
            Ok(())
        }
    }

    /// Agents within `kappa` hops of `agent`, including `agent`, ascending.
    pub fn khop_neighborhood(&self, agent: usize, kappa: usize) -> Result<&[usize]> {
        self.check(agent)?;
        let lists = &self.khop[agent];
        Ok(&lists[kappa.min(lists.len() - 1)])
    }

    /// Agents farther than `kappa` hops from `agent` (or unreachable), ascending.
    pub fn complement_khop(&self, agent: usize, kappa: usize) -> Result<&[usize]> {
        self.check(agent)?;
        let lists = &self.complement[agent];
        Ok(&lists[kappa.min(lists.len() - 1)])
    }
}

fn bfs(adjacency: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adjacency.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adjacency[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
