//! Closed-form transit probabilities for flat-row Markovian fields.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{invalid, Error, Result};
use crate::field::StationaryDistribution;

/// Above this value of `n * |ln p|` powers are evaluated through logarithms.
pub const LOG_SPACE_THRESHOLD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitLaw {
    pub dist: StationaryDistribution,
    pub n: u64,
}

impl TransitLaw {
    pub fn p_exact(&self) -> f64 {
        p_exact_rows(&self.dist, self.n)
    }

    pub fn q_at_least(&self) -> f64 {
        q_at_least(&self.dist, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreePathStats {
    /// Mean number of rows crossed before the first obstacle.
    pub mean: f64,
    pub variance: f64,
}

impl FreePathStats {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringModel {
    /// Largest instantaneous heading change, radians.
    pub theta_cr: f64,
    pub alpha_over_gamma: f64,
}

impl SteeringModel {
    pub fn new(theta_cr: f64, alpha_over_gamma: f64) -> Result<Self> {
        let m = Self {
            theta_cr,
            alpha_over_gamma,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_cr >= 0.0 && self.theta_cr < FRAC_PI_2) {
            return Err(invalid(format!(
                "theta_cr must lie in [0, pi/2), got {}",
                self.theta_cr
            )));
        }
        if !(self.alpha_over_gamma.is_finite() && self.alpha_over_gamma > 0.0) {
            return Err(invalid(format!(
                "alpha/gamma must be positive, got {}",
                self.alpha_over_gamma
            )));
        }
        Ok(())
    }
}

/// `base^n`, switching to `exp(n ln base)` when the direct power would underflow.
fn pow_n(base: f64, n: u64) -> f64 {
    let ln = base.ln();
    if n as f64 * ln.abs() > LOG_SPACE_THRESHOLD {
        (n as f64 * ln).exp()
    } else {
        base.powf(n as f64)
    }
}

pub fn ln_p_exact_rows(dist: &StationaryDistribution, n: u64) -> f64 {
    n as f64 * dist.p1.ln() + dist.p2.ln()
}

/// Probability of crossing exactly `n` rows before the first obstacle.
pub fn p_exact_rows(dist: &StationaryDistribution, n: u64) -> f64 {
    if n as f64 * dist.p1.ln().abs() > LOG_SPACE_THRESHOLD {
        ln_p_exact_rows(dist, n).exp()
    } else {
        dist.p1.powf(n as f64) * dist.p2
    }
}

/// Probability of crossing at least `n` rows.
pub fn q_at_least(dist: &StationaryDistribution, n: u64) -> f64 {
    pow_n(dist.p1, n)
}

pub fn free_path_stats(dist: &StationaryDistribution) -> Result<FreePathStats> {
    if !(dist.p2 > 0.0) {
        return Err(Error::DivergentMean { p2: dist.p2 });
    }
    let ratio = dist.p1 / dist.p2;
    Ok(FreePathStats {
        mean: ratio,
        variance: ratio * (1.0 + ratio),
    })
}

/// Probability of clearing a single row with steering authority `theta_cr`.
pub fn row_pass_prob(dist: &StationaryDistribution, steer: &SteeringModel) -> f64 {
    dist.p1 + dist.p2 * evade_prob(steer)
}

/// Probability that a blocking slat can be steered around.
fn evade_prob(steer: &SteeringModel) -> f64 {
    -(-steer.alpha_over_gamma * steer.theta_cr.tan()).exp_m1()
}

pub fn ln_collision_free_prob(
    dist: &StationaryDistribution,
    steer: &SteeringModel,
    n: u64,
) -> Result<f64> {
    steer.validate()?;
    let fail = dist.p2 * (-steer.alpha_over_gamma * steer.theta_cr.tan()).exp();
    Ok(n as f64 * (-fail).ln_1p())
}

/// Probability of a collision-free path through `n` evenly spaced rows.
pub fn collision_free_prob(
    dist: &StationaryDistribution,
    steer: &SteeringModel,
    n: u64,
) -> Result<f64> {
    steer.validate()?;
    let per_row = row_pass_prob(dist, steer);
    if n as f64 * per_row.ln().abs() > LOG_SPACE_THRESHOLD {
        return Ok(ln_collision_free_prob(dist, steer, n)?.exp());
    }
    Ok(per_row.powf(n as f64))
}

/// Bisection tolerance on the root of [`critical_theta`].
pub const CRITICAL_THETA_TOL: f64 = 1e-12;

/// Steering angle at which the collision-free probability reaches `target`.
pub fn critical_theta(
    dist: &StationaryDistribution,
    alpha_over_gamma: f64,
    n: u64,
    target: f64,
) -> Result<f64> {
    let at = |theta: f64| -> Result<f64> {
        collision_free_prob(dist, &SteeringModel::new(theta, alpha_over_gamma)?, n)
    };
    let floor = q_at_least(dist, n);
    let no_root = Error::NoRoot {
        target,
        lo: floor,
        hi: 1.0,
    };
    if !(target.is_finite() && target < 1.0) {
        return Err(no_root);
    }
    if (target - floor).abs() <= 1e-14 * floor.max(f64::MIN_POSITIVE) {
        return Ok(0.0);
    }
    if target < floor {
        return Err(no_root);
    }

    let mut lo = 0.0;
    let mut hi = FRAC_PI_2 * (1.0 - 1e-15);
    if at(hi)? < target {
        return Err(no_root);
    }
    while hi - lo > CRITICAL_THETA_TOL {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
