//! Belief and trust update rules for a single listener and a single report.
//!
//! Everything here is a pure function of its inputs. Reliability is
//! symmetric: a source of reliability `x` asserts the true state of the
//! hypothesis with probability `x`, whichever state that is.

use thiserror::Error;

use crate::agent::SourceId;
use crate::prob::Probability;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("trust distribution has zero normalizing mass")]
    DegenerateDistribution,
    #[error("report from unregistered source {0:?}")]
    UnknownSource(SourceId),
}

/// The content of a report: whether it asserts `H` or `¬H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Claim {
    pub asserts_h: bool,
}

impl Claim {
    pub const H: Claim = Claim { asserts_h: true };
    pub const NOT_H: Claim = Claim { asserts_h: false };

    pub fn negate(self) -> Claim {
        Claim {
            asserts_h: !self.asserts_h,
        }
    }
}

/// Discretized reliability density on the midpoints `x_i = (i + 0.5) / R`.
///
/// The density is kept normalized under the midpoint rule, i.e.
/// `(1/R) Σ density[i] = 1`. The expectation is cached because the engine
/// reads it once per agent per step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrustGrid {
    density: Vec<f64>,
    mean: f64,
}

impl TrustGrid {
    /// Builds a grid from arbitrary non-negative cell values, normalizing them.
    pub fn from_density(density: Vec<f64>) -> Result<Self, ModelError> {
        if density.len() < 2 {
            return Err(ModelError::InvalidParameter(format!(
                "grid resolution must be at least 2, got {}",
                density.len()
            )));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(ModelError::InvalidParameter(
                "grid densities must be finite and non-negative".into(),
            ));
        }
        let mut grid = TrustGrid { density, mean: 0.0 };
        grid.normalize()?;
        Ok(grid)
    }

    #[inline]
    pub fn resolution(&self) -> usize {
        self.density.len()
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Midpoint of cell `i`.
    #[inline]
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.density.len() as f64
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        let r = self.density.len() as f64;
        (0..self.density.len()).map(move |i| (i as f64 + 0.5) / r)
    }

    /// Midpoint-rule expectation of the reliability.
    #[inline]
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Midpoint-rule integral of the density; 1 after normalization.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() / self.density.len() as f64
    }

    /// The grid mirrored about `x = 1/2`.
    pub fn reflected(&self) -> TrustGrid {
        let density: Vec<f64> = self.density.iter().rev().copied().collect();
        let mean = 1.0 - self.mean;
        TrustGrid { density, mean }
    }

    fn normalize(&mut self) -> Result<(), ModelError> {
        let r = self.density.len() as f64;
        let mass = self.density.iter().sum::<f64>() / r;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(ModelError::DegenerateDistribution);
        }
        let scale = 1.0 / mass;
        let mut first_moment = 0.0;
        for (i, d) in self.density.iter_mut().enumerate() {
            *d *= scale;
            first_moment += (i as f64 + 0.5) / r * *d;
        }
        self.mean = first_moment / r;
        Ok(())
    }
}

/// A listener's model of one source's reliability.
#[derive(Clone, Debug, PartialEq)]
pub enum TrustModel {
    Fixed(Probability),
    Grid(TrustGrid),
}

impl TrustModel {
    pub fn expectation(&self) -> Probability {
        expected_trust(self)
    }
}

/// Beta(alpha, beta) density sampled on the cell midpoints and normalized.
pub fn make_beta_grid(alpha: f64, beta_param: f64, resolution: usize) -> Result<TrustGrid, ModelError> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta_param > 0.0 && beta_param.is_finite()) {
        return Err(ModelError::InvalidParameter(format!(
            "beta shape parameters must be positive, got ({alpha}, {beta_param})"
        )));
    }
    if resolution < 2 {
        return Err(ModelError::InvalidParameter(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let r = resolution as f64;
    // log-density first so large shapes do not underflow before normalizing
    let log_density: Vec<f64> = (0..resolution)
        .map(|i| {
            let x = (i as f64 + 0.5) / r;
            (alpha - 1.0) * x.ln() + (beta_param - 1.0) * (1.0 - x).ln()
        })
        .collect();
    let peak = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let density = log_density.into_iter().map(|l| (l - peak).exp()).collect();
    TrustGrid::from_density(density)
}

pub fn expected_trust(model: &TrustModel) -> Probability {
    match model {
        TrustModel::Fixed(p) => *p,
        TrustModel::Grid(g) => Probability::saturating(g.mean()),
    }
}

/// Posterior belief in `H` after one report, or `None` when the update is
/// the undefined `0/0` case (certain belief contradicted by a source of
/// certain reliability or anti-reliability).
pub fn belief_posterior(belief: Probability, e_trust: Probability, claim: Claim) -> Option<Probability> {
    let p = belief.value();
    let e = e_trust.value();
    if e == 0.5 {
        return Some(belief);
    }
    let (num, other) = if claim.asserts_h {
        (e * p, (1.0 - e) * (1.0 - p))
    } else {
        ((1.0 - e) * p, e * (1.0 - p))
    };
    let den = num + other;
    if den == 0.0 {
        None
    } else {
        Some(Probability::saturating(num / den))
    }
}

/// Posterior belief in `H` after one report from a source with expected
/// reliability `e_trust`. The undefined case leaves the belief unchanged.
pub fn update_belief(belief: Probability, e_trust: Probability, claim: Claim) -> Probability {
    belief_posterior(belief, e_trust, claim).unwrap_or(belief)
}

/// Reweights the reliability density by the probability each reliability
/// level assigns to the received claim, given the listener's belief before
/// the report.
pub fn update_trust_grid(grid: &TrustGrid, belief_before: Probability, claim: Claim) -> Result<TrustGrid, ModelError> {
    let p = belief_before.value();
    // likelihood of the claim at reliability x is intercept + slope * x
    let (intercept, slope) = if claim.asserts_h {
        (1.0 - p, 2.0 * p - 1.0)
    } else {
        (p, 1.0 - 2.0 * p)
    };
    let r = grid.resolution() as f64;
    let density = grid
        .density
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let x = (i as f64 + 0.5) / r;
            (intercept + slope * x) * d
        })
        .collect();
    let mut next = TrustGrid { density, mean: 0.0 };
    next.normalize()?;
    Ok(next)
}

/// Slack in the assertion comparison.
///
/// Grid quadrature puts expected trust a few 1e-7 below its analytic value,
/// so a belief that lands exactly on the threshold in closed form (e.g. two
/// confirmations under a Beta(2, 1) prior give exactly 0.8) would otherwise
/// miss it. The slack is far above that error and far below any belief step.
pub const ASSERTION_TOLERANCE: f64 = 1e-6;

/// Whether an agent with this belief is willing to assert, and what.
///
/// Both bands are closed, up to [`ASSERTION_TOLERANCE`].
pub fn decide_assertion(belief: Probability, threshold: Probability) -> Result<Option<Claim>, ModelError> {
    let t = threshold.value();
    if t <= 0.5 {
        return Err(ModelError::InvalidParameter(format!(
            "assertion threshold must exceed 0.5, got {t}"
        )));
    }
    let b = belief.value();
    Ok(if b >= t - ASSERTION_TOLERANCE {
        Some(Claim::H)
    } else if b <= 1.0 - t + ASSERTION_TOLERANCE {
        Some(Claim::NOT_H)
    } else {
        None
    })
}

/// Shape of a Beta distribution over a reliability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Outcome-based baseline: conjugate Beta-binomial counting of reports that
/// were later confirmed or disconfirmed by the observed outcome.
pub fn outcome_posterior(alpha: f64, beta_param: f64, confirming: u64, disconfirming: u64) -> BetaShape {
    BetaShape {
        alpha: alpha + confirming as f64,
        beta: beta_param + disconfirming as f64,
    }
}
