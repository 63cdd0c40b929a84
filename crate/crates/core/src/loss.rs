//! Hinge and rescaled-hinge losses and the half-quadratic (HQ) weighting.
//!
//! The rescaled hinge `β(1 − exp(−η·hinge(z)))` is bounded, so a triplet with
//! a huge hinge loss cannot dominate an update. HQ turns the non-convex problem
//! into alternating steps: the auxiliary variable `v = −exp(−η·hinge)` has a
//! closed form, and given `v` the metric update is an ordinary
//! passive-aggressive step with aggressiveness `C_t = C·β·η·(−v)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent magnitude fed to `exp` before clamping.
const MAX_EXPONENT: f64 = 700.0;
/// Floor for adaptive weights so they stay strictly positive.
pub const MIN_WEIGHT: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustParams {
    /// Aggressiveness bound `C`.
    pub c: f64,
    /// Rescaling parameter `η`. Zero selects the plain hinge.
    pub eta: f64,
    pub max_hq_iter: usize,
}

impl Default for RobustParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            eta: 1.0,
            max_hq_iter: 3,
        }
    }
}

impl RobustParams {
    pub fn new(c: f64, eta: f64, max_hq_iter: usize) -> Result<Self> {
        let params = Self {
            c,
            eta,
            max_hq_iter,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::config(
                "C",
                format!("must be finite and > 0, got {}", self.c),
            ));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::config(
                "eta",
                format!("must be finite and ≥ 0, got {}", self.eta),
            ));
        }
        if !(1..=10).contains(&self.max_hq_iter) {
            return Err(Error::config(
                "max_hq_iter",
                format!("must lie in 1..=10, got {}", self.max_hq_iter),
            ));
        }
        Ok(())
    }

    /// `η > 0`; otherwise the learner runs the plain hinge.
    pub fn is_robust(&self) -> bool {
        self.eta > 0.0
    }

    /// Normalizing constant `β = 1/(1 − exp(−η))`; `None` in plain-hinge mode.
    pub fn beta(&self) -> Option<f64> {
        self.is_robust().then(|| beta(self.eta))
    }
}

fn beta(eta: f64) -> f64 {
    1.0 / -(-eta).exp_m1()
}

pub fn hinge(z: f64) -> f64 {
    (1.0 - z).max(0.0)
}

/// `β(1 − exp(−η·hinge(z)))`, bounded in `[0, β]` with value 1 at `z = 0`.
pub fn rescaled_hinge(z: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::contract(format!(
            "rescaled hinge needs η > 0, got {eta}"
        )));
    }
    Ok(beta(eta) * -(-eta * hinge(z)).exp_m1())
}

/// Closed-form HQ auxiliary variable `v = −exp(−η·loss)`, in `[−1, 0)`.
pub fn hq_auxiliary(hinge_loss: f64, eta: f64) -> Result<f64> {
    if !(hinge_loss >= 0.0) {
        return Err(Error::contract(format!(
            "hinge loss must be ≥ 0, got {hinge_loss}"
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::contract(format!(
            "HQ auxiliary needs η > 0, got {eta}"
        )));
    }
    let exponent = (eta * hinge_loss).min(MAX_EXPONENT);
    Ok(-(-exponent).exp())
}

/// Adaptive triplet aggressiveness `C_t = C·β·η·(−v)`; `C` in plain-hinge mode.
pub fn triplet_weight(params: &RobustParams, v: f64) -> Result<f64> {
    let Some(beta) = params.beta() else {
        return Ok(params.c);
    };
    if !(-1.0..0.0).contains(&v) {
        return Err(Error::contract(format!(
            "auxiliary v must lie in [−1, 0), got {v}"
        )));
    }
    Ok((params.c * beta * params.eta * -v).max(MIN_WEIGHT))
}

/// Conjugate term `g(v) = −v·ln(−v) + v` for `v < 0`.
pub fn conjugate(v: f64) -> f64 {
    -v * (-v).ln() + v
}

/// The per-triplet HQ objective `η·loss·v − g(v)` that [`hq_auxiliary`] maximizes.
pub fn hq_objective(eta: f64, hinge_loss: f64, v: f64) -> f64 {
    eta * hinge_loss * v - conjugate(v)
}
