use netpref::envs::{GridWorld, GridWorldConfig};
use netpref::graph::AgentGraph;
use netpref::mdp::DEFAULT_ENUMERATION_CAP;
use netpref::oracle::{self, JointModel};
use netpref::policy::PolicyTable;
use netpref::rng::stream;
use netpref::rollout::*;
use netpref::zoo;

#[test]
fn truncated_views_agree_with_neighborhood_rewards() {
    let env = GridWorld::new(GridWorldConfig::default(), AgentGraph::chain(4).unwrap()).unwrap();
    let policy = PolicyTable::zeros(netpref::policy::PolicyShape::for_mdp::<f64, _>(&env).unwrap());
    let traj = rollout_joint::<f64, _, _>(&env, &policy, 12, &mut stream(1, &[])).unwrap();
    let returns: Vec<f64> = traj.discounted_returns(0.9);
    for kappa in 0..4 {
        let rhat = neighborhood_rewards(&returns, env_graph(&env), kappa).unwrap();
        for i in 0..4 {
            let tt = truncate(&traj, env_graph(&env), i, kappa).unwrap();
            assert_eq!(tt.members, env_graph(&env).khop_neighborhood(i, kappa).unwrap());
            let direct = trajectory_reward(&tt, 0.9, 4);
            assert!((direct - rhat[i]).abs() < 1e-12);
        }
    }
    let total: f64 = returns.iter().sum::<f64>() / 4.0;
    assert!((traj.average_return(0.9) - total).abs() < 1e-12);
}

fn env_graph(env: &GridWorld) -> &AgentGraph {
    netpref::mdp::FactoredMdp::<f64>::graph(env)
}

#[test]
fn discounted_returns_by_hand() {
    let mdp = zoo::bandit::<f64>().unwrap();
    let shape = netpref::policy::PolicyShape::new(vec![1], vec![2]).unwrap();
    let always_first = PolicyTable::from_theta(shape, vec![50.0, -50.0]).unwrap();
    let t = rollout_joint(&mdp, &always_first, 3, &mut stream(0, &[])).unwrap();
    // rewards 1, 1, 1 with gamma 0.5
    assert_eq!(t.discounted_returns(0.5), vec![1.75]);
}

#[test]
fn same_stream_same_trajectory() {
    let mdp = zoo::three_agent_chain::<f64>().unwrap();
    let policy = PolicyTable::zeros(netpref::policy::PolicyShape::for_mdp::<f64, _>(&mdp).unwrap());
    let a = rollout_joint(&mdp, &policy, 20, &mut stream(3, &[9])).unwrap();
    let b = rollout_joint(&mdp, &policy, 20, &mut stream(3, &[9])).unwrap();
    let c = rollout_joint(&mdp, &policy, 20, &mut stream(3, &[10])).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn monte_carlo_mean_matches_truncated_objective() {
    let mdp = zoo::three_agent_chain::<f64>().unwrap();
    let model = JointModel::build(&mdp, DEFAULT_ENUMERATION_CAP).unwrap();
    let policy = netpref::diagnostics::random_policy(model.policy_shape().clone(), 4, 0, 1.0);
    let n = 20_000;
    let (agent, kappa, h) = (0, 1, 6);
    let samples: Vec<f64> = (0..n as u64)
        .map(|r| {
            let t = rollout_joint(&mdp, &policy, h, &mut stream(4, &[r])).unwrap();
            trajectory_reward(&truncate(&t, model.graph(), agent, kappa).unwrap(), 0.9, 3)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let exact = oracle::truncated_objective(&model, &policy, agent, kappa, h).unwrap();
    assert!((mean - exact).abs() < 5.0 * (var / n as f64).sqrt(), "{mean} vs {exact}");
}

#[test]
fn jsonl_has_one_record_per_agent_step() {
    let mdp = zoo::three_agent_chain::<f64>().unwrap();
    let policy = PolicyTable::zeros(netpref::policy::PolicyShape::for_mdp::<f64, _>(&mdp).unwrap());
    let t = rollout_joint(&mdp, &policy, 4, &mut stream(5, &[])).unwrap();
    let mut buf = Vec::new();
    t.write_jsonl(2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["rollout"], 2);
    assert_eq!(first["step"], 0);
    assert_eq!(first["agent"], 0);
}

#[test]
fn zero_horizon_is_rejected() {
    let mdp = zoo::bandit::<f64>().unwrap();
    let policy = PolicyTable::zeros(netpref::policy::PolicyShape::new(vec![1], vec![2]).unwrap());
    assert!(rollout_joint(&mdp, &policy, 0, &mut stream(0, &[])).is_err());
}
