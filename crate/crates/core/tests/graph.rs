mod common;

use common::{bfs_ball, floyd_warshall};
use netpref::graph::{AgentGraph, GraphSpec};
use proptest::prelude::*;

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let m = pairs.len();
        (Just(n), proptest::collection::vec(any::<bool>(), m)).prop_map(move |(n, mask)| {
            let edges = pairs.iter().zip(&mask).filter(|(_, &k)| k).map(|(&e, _)| e).collect();
            (n, edges)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn khop_matches_floyd_warshall((n, edges) in graph_strategy()) {
        let g = AgentGraph::new(n, &edges).unwrap();
        let d = floyd_warshall(n, &edges);
        for i in 0..n {
            for kappa in 0..=n {
                let expected: Vec<usize> = (0..n).filter(|&j| d[i][j] <= kappa).collect();
                prop_assert_eq!(g.khop_neighborhood(i, kappa).unwrap(), expected.as_slice());
                let rest: Vec<usize> = (0..n).filter(|&j| d[i][j] > kappa).collect();
                prop_assert_eq!(g.complement_khop(i, kappa).unwrap(), rest.as_slice());
                prop_assert_eq!(expected, bfs_ball(n, &edges, i, kappa));
            }
            for j in 0..n {
                let want = if d[i][j] == usize::MAX { None } else { Some(d[i][j]) };
                prop_assert_eq!(g.distance(i, j), want);
            }
        }
    }

    #[test]
    fn edge_orientation_is_irrelevant((n, edges) in graph_strategy()) {
        let flipped: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (b, a)).collect();
        let g = AgentGraph::new(n, &edges).unwrap();
        let h = AgentGraph::new(n, &flipped).unwrap();
        for i in 0..n {
            prop_assert_eq!(g.neighbors(i), h.neighbors(i));
        }
    }
}

#[test]
fn chain_neighborhoods() {
    let g = AgentGraph::chain(5).unwrap();
    assert_eq!(g.khop_neighborhood(2, 1).unwrap(), &[1, 2, 3]);
    assert_eq!(g.khop_neighborhood(0, 2).unwrap(), &[0, 1, 2]);
    assert_eq!(g.khop_neighborhood(0, 0).unwrap(), &[0]);
    assert_eq!(g.complement_khop(0, 1).unwrap(), &[2, 3, 4]);
    assert_eq!(g.diameter(), 4);
}

#[test]
fn invalid_graphs() {
    assert!(AgentGraph::new(0, &[]).is_err());
    assert!(AgentGraph::new(3, &[(0, 0)]).is_err());
    assert!(AgentGraph::new(3, &[(0, 1), (1, 0)]).is_err());
    assert!(AgentGraph::new(3, &[(0, 3)]).is_err());
    let g = AgentGraph::chain(3).unwrap();
    assert!(g.khop_neighborhood(3, 1).is_err());
}

#[test]
fn specs() {
    let chain = GraphSpec { preset: Some("chain".into()), edges: None };
    assert_eq!(AgentGraph::from_spec(4, &chain).unwrap().neighbors(1), &[0, 2]);
    let explicit = GraphSpec { preset: None, edges: Some(vec![[0, 2]]) };
    assert_eq!(AgentGraph::from_spec(3, &explicit).unwrap().neighbors(0), &[2]);
    let both = GraphSpec { preset: Some("chain".into()), edges: Some(vec![]) };
    assert!(AgentGraph::from_spec(3, &both).is_err());
    let star = GraphSpec { preset: Some("star".into()), edges: None };
    assert!(AgentGraph::from_spec(3, &star).is_err());
}
