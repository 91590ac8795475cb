//! Policy evaluation for metrics: exact on enumerable models, Monte Carlo otherwise.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::FactoredMdp;
use crate::oracle::{self, JointModel};
use crate::policy::PolicyTable;
use crate::rng::{stream, tag};
use crate::rollout::rollout_joint;
use crate::scalar::Scalar;

pub trait PolicyEvaluator<S: Scalar>: Sync {
    /// Estimated or exact `J(theta)`.
    fn evaluate(&self, policy: &PolicyTable<S>) -> Result<S>;
}

/// Smallest `H` with `gamma^H < tol`.
pub fn horizon_for_tolerance(gamma: f64, tol: f64) -> usize {
    ((tol.ln() / gamma.ln()).floor() as usize) + 1
}

pub struct ExactEvaluator<S> {
    pub model: JointModel<S>,
}

impl<S: Scalar> PolicyEvaluator<S> for ExactEvaluator<S> {
    fn evaluate(&self, policy: &PolicyTable<S>) -> Result<S> {
        oracle::objective(&self.model, policy)
    }
}

/// Mean network-average discounted return over a fixed set of rollout streams.
///
/// The streams are the same for every call, so successive evaluations of
/// nearby policies share their randomness.
pub struct MonteCarloEvaluator<'a, M> {
    pub mdp: &'a M,
    pub rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl<'a, M> MonteCarloEvaluator<'a, M> {
    pub fn new<S: Scalar>(mdp: &'a M, rollouts: usize, seed: u64) -> Self
    where
        M: FactoredMdp<S>,
    {
        let horizon = horizon_for_tolerance(mdp.gamma().as_f64(), 1e-4);
        Self { mdp, rollouts, horizon, seed }
    }
}

impl<S: Scalar, M: FactoredMdp<S>> PolicyEvaluator<S> for MonteCarloEvaluator<'_, M> {
    fn evaluate(&self, policy: &PolicyTable<S>) -> Result<S> {
        if self.rollouts == 0 {
            return Err(Error::arg("Monte-Carlo evaluation needs at least one rollout"));
        }
        let gamma = self.mdp.gamma();
        let returns: Vec<S> = (0..self.rollouts as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(self.seed, &[tag::EVALUATION, r]);
                Ok(rollout_joint(self.mdp, policy, self.horizon, &mut rng)?.average_return(gamma))
            })
            .collect::<Result<_>>()?;
        Ok(returns.into_iter().sum::<S>() / S::of_usize(self.rollouts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_horizon() {
        assert_eq!(horizon_for_tolerance(0.9, 1e-4), 88);
        assert!(0.9f64.powi(88) < 1e-4 && 0.9f64.powi(87) >= 1e-4);
        assert_eq!(horizon_for_tolerance(0.5, 1e-4), 14);
    }
}
