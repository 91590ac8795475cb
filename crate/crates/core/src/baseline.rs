//! True-reward policy-gradient ascent, used as the reference learner.
//!
//! On enumerable models the gradient is exact. Otherwise it is a
//! high-sample REINFORCE estimate with reward-to-go and a leave-one-out
//! baseline, which is unbiased for the `H`-step objective.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::PolicyEvaluator;
use crate::learner::{update, MetricRow};
use crate::mdp::FactoredMdp;
use crate::oracle::{self, JointModel};
use crate::policy::PolicyTable;
use crate::rng::{stream, tag};
use crate::rollout::{rollout_joint, JointTrajectory};
use crate::scalar::{norm, Scalar};

/// Monte-Carlo policy gradient of the `horizon`-step objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReinforceConfig {
    pub rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
}

fn rewards_to_go<S: Scalar>(traj: &JointTrajectory<S>, gamma: S) -> Vec<S> {
    // G_t = sum_{t' >= t} gamma^{t'} rbar_{t'}, rbar the network-average reward
    let (h, n) = (traj.horizon(), traj.n_agents());
    let inv_n = S::one() / S::of_usize(n);
    let mut out = vec![S::zero(); h];
    let mut w = gamma.powi(h as i32 - 1);
    let mut acc = S::zero();
    for t in (0..h).rev() {
        let r: S = (0..n).map(|i| traj.reward(t, i)).sum::<S>() * inv_n;
        acc = acc + w * r;
        out[t] = acc;
        w = w / gamma;
    }
    out
}

pub fn reinforce_gradient<S, M>(mdp: &M, policy: &PolicyTable<S>, cfg: &ReinforceConfig, iteration: u64) -> Result<Vec<S>>
where
    S: Scalar,
    M: FactoredMdp<S>,
{
    if cfg.rollouts < 2 {
        return Err(Error::arg("REINFORCE needs at least two rollouts for its baseline"));
    }
    let gamma = mdp.gamma();
    let trajs: Vec<(JointTrajectory<S>, Vec<S>)> = (0..cfg.rollouts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, &[tag::BASELINE, iteration, r]);
            let t = rollout_joint(mdp, policy, cfg.horizon, &mut rng)?;
            let g = rewards_to_go(&t, gamma);
            Ok((t, g))
        })
        .collect::<Result<_>>()?;
    let n_roll = S::of_usize(cfg.rollouts);
    let mut totals = vec![S::zero(); cfg.horizon];
    for (_, g) in &trajs {
        for (a, &x) in totals.iter_mut().zip(g) {
            *a = *a + x;
        }
    }
    let shape = policy.shape();
    let mut grad = vec![S::zero(); shape.total_dim()];
    for (traj, g) in &trajs {
        for t in 0..cfg.horizon {
            let baseline = (totals[t] - g[t]) / (n_roll - S::one());
            let adv = g[t] - baseline;
            for i in 0..traj.n_agents() {
                let o = mdp.observe(i, traj.state(t, i));
                let a = traj.action(t, i);
                for (b, &p) in policy.action_probs(i, o).iter().enumerate() {
                    let k = shape.index(i, o, b);
                    let e = if b == a { S::one() - p } else { -p };
                    grad[k] = grad[k] + adv * e;
                }
            }
        }
    }
    for x in &mut grad {
        *x = *x / n_roll;
    }
    Ok(grad)
}

/// `T` steps of `theta += alpha * grad J` with exact gradients.
pub fn exact_ascent<S: Scalar>(
    model: &JointModel<S>,
    initial: PolicyTable<S>,
    alpha: f64,
    iterations: usize,
) -> Result<(PolicyTable<S>, Vec<MetricRow>)> {
    let mut policy = initial;
    let mut rows = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let g = oracle::exact_gradient(model, &policy)?;
        policy = update(&policy, &g, S::of(alpha))?;
        rows.push(MetricRow {
            iteration: t,
            ret: oracle::objective(model, &policy)?.as_f64(),
            grad_norm: norm(&g).as_f64(),
            mean_abs_invlink: 0.0,
            elapsed_ms: 0,
        });
    }
    Ok((policy, rows))
}

/// `T` steps of ascent along REINFORCE estimates, evaluated after every update.
pub fn reinforce_ascent<S, M, E>(
    mdp: &M,
    initial: PolicyTable<S>,
    alpha: f64,
    iterations: usize,
    cfg: &ReinforceConfig,
    evaluator: &E,
) -> Result<(PolicyTable<S>, Vec<MetricRow>)>
where
    S: Scalar,
    M: FactoredMdp<S>,
    E: PolicyEvaluator<S> + ?Sized,
{
    let mut policy = initial;
    let mut rows = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let g = reinforce_gradient(mdp, &policy, cfg, t as u64)?;
        policy = update(&policy, &g, S::of(alpha))?;
        rows.push(MetricRow {
            iteration: t,
            ret: evaluator.evaluate(&policy)?.as_f64(),
            grad_norm: norm(&g).as_f64(),
            mean_abs_invlink: 0.0,
            elapsed_ms: 0,
        });
    }
    Ok((policy, rows))
}
