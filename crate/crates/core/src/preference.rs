//! Simulated preference feedback over trajectory pairs.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Link between a reward difference and a preference probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Link {
    /// Logistic `1 / (1 + e^{-x})`.
    #[default]
    BradleyTerry,
    /// `1/2 + x / (2 scale)`, clamped into `[0, 1]`.
    Linear { scale: f64 },
}

impl Link {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Link::BradleyTerry => Ok(()),
            Link::Linear { scale } if scale > 0.0 && scale.is_finite() => Ok(()),
            Link::Linear { .. } => Err(Error::config("learner.link.scale", "must be positive")),
        }
    }

    pub fn forward<S: Scalar>(&self, x: S) -> S {
        match *self {
            Link::BradleyTerry => {
                if x >= S::zero() {
                    S::one() / (S::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (S::one() + e)
                }
            }
            Link::Linear { scale } => {
                let half = S::of(0.5);
                (half + x / (S::of(2.0 * scale))).max(S::zero()).min(S::one())
            }
        }
    }

    /// `1 - sigma(x)`, evaluated without cancellation.
    pub fn forward_complement<S: Scalar>(&self, x: S) -> S {
        match *self {
            Link::BradleyTerry => self.forward(-x),
            Link::Linear { scale } => {
                let half = S::of(0.5);
                (half - x / (S::of(2.0 * scale))).max(S::zero()).min(S::one())
            }
        }
    }

    /// `sigma^{-1}`; finite on the open unit interval.
    pub fn inverse<S: Scalar>(&self, p: S) -> S {
        match *self {
            Link::BradleyTerry => p.ln() - (-p).ln_1p(),
            Link::Linear { scale } => S::of(scale) * (S::of(2.0) * p - S::one()),
        }
    }

    /// `sigma^{-1}(1 - q)` without forming `1 - q`, which rounds to one for tiny `q`.
    pub fn inverse_complement<S: Scalar>(&self, q: S) -> S {
        match *self {
            Link::BradleyTerry => (-q).ln_1p() - q.ln(),
            Link::Linear { scale } => S::of(scale) * (S::one() - S::of(2.0) * q),
        }
    }

    /// Lipschitz constant of `sigma^{-1}` on `[delta, 1 - delta]`.
    pub fn inverse_lipschitz<S: Scalar>(&self, delta: S) -> S {
        match *self {
            Link::BradleyTerry => S::one() / (delta * (S::one() - delta)),
            Link::Linear { scale } => S::of(2.0 * scale),
        }
    }
}

/// `sigma(r1 - r0)`: probability that trajectory 1 is preferred.
pub fn preference_prob<S: Scalar>(link: &Link, r1: S, r0: S) -> S {
    link.forward(r1 - r0)
}

/// Clamps `x` into `[delta, 1 - delta]`.
pub fn trim<S: Scalar>(x: S, delta: S) -> Result<S> {
    if !(delta >= S::zero() && delta < S::of(0.5)) {
        return Err(Error::arg(format!("trim level {delta} outside [0, 1/2)")));
    }
    Ok(x.max(delta).min(S::one() - delta))
}

/// `sigma^{-1}(trim(p | delta))`.
///
/// The upper clamp is evaluated as `sigma^{-1}(1 - delta)` directly, so the
/// result stays finite even when `1 - delta` is not representable.
pub fn trimmed_inverse<S: Scalar>(link: &Link, p: S, delta: S) -> Result<S> {
    let t = trim(p, delta)?;
    if t <= delta {
        Ok(link.inverse(delta))
    } else if S::one() - p <= delta {
        Ok(link.inverse_complement(delta))
    } else {
        Ok(link.inverse(t))
    }
}

/// `min{ sigma(-2R(1-gamma^H)/(1-gamma)), 1 - sigma(2R(1-gamma^H)/(1-gamma)) }`.
///
/// Floored at the smallest positive normal value of `S`, so the inverse link
/// stays finite when the exact level underflows.
pub fn trim_level<S: Scalar>(link: &Link, r_bound: S, gamma: S, horizon: usize) -> S {
    let gh = gamma.powi(horizon as i32);
    let span = S::of(2.0) * r_bound * (S::one() - gh) / (S::one() - gamma);
    let level = link.forward(-span).min(link.forward_complement(span));
    level.max(S::min_positive_value())
}

/// `m` independent Bernoulli votes, `1` meaning trajectory 1 is preferred.
pub fn query_evaluators<S: Scalar, R: Rng + ?Sized>(link: &Link, r1: S, r0: S, m: usize, rng: &mut R) -> Result<Vec<u8>> {
    if m == 0 {
        return Err(Error::arg("need at least one evaluator"));
    }
    let p = preference_prob(link, r1, r0).as_f64();
    Ok((0..m).map(|_| u8::from(rng.random::<f64>() < p)).collect())
}

/// Number of `1` votes among `m` evaluators with preference probability `p`.
///
/// Same law as summing [`query_evaluators`], drawn in one Binomial sample.
pub fn count_votes<R: Rng + ?Sized>(p: f64, m: usize, rng: &mut R) -> Result<u64> {
    if m == 0 {
        return Err(Error::arg("need at least one evaluator"));
    }
    let dist = Binomial::new(m as u64, p.clamp(0.0, 1.0)).map_err(|e| Error::arg(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Trimmed vote mean.
pub fn estimate_preference<S: Scalar>(votes: &[u8], delta: S) -> Result<S> {
    if votes.is_empty() {
        return Err(Error::arg("cannot estimate a preference from zero votes"));
    }
    let ones = votes.iter().filter(|&&v| v != 0).count();
    trim(S::of_usize(ones) / S::of_usize(votes.len()), delta)
}

/// Votes for one trial and the resulting trimmed estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceBatch<S> {
    pub trial: usize,
    pub votes: Vec<u8>,
    pub estimate: S,
    pub delta: S,
}

impl<S: Scalar> PreferenceBatch<S> {
    pub fn collect<R: Rng + ?Sized>(
        link: &Link,
        trial: usize,
        r1: S,
        r0: S,
        m: usize,
        delta: S,
        rng: &mut R,
    ) -> Result<Self> {
        let votes = query_evaluators(link, r1, r0, m, rng)?;
        let estimate = estimate_preference(&votes, delta)?;
        Ok(Self { trial, votes, estimate, delta })
    }
}
