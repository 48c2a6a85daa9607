//! Unicycle kinematics and the two vision-referenced feedback laws:
//! circling a goal from range and bearing, and passing between two image
//! features from their time-to-transit.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::camera::{FeaturePoint, TauEstimate};
use crate::error::{invalid, Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = (theta + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading measured counterclockwise from the world x-axis.
    pub theta: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

/// Below this value of `|omega| dt` the update uses a straight chord.
pub const ARC_SWITCH: f64 = 1e-8;

/// Exact unicycle update over `dt` with constant `u`.
pub fn step_kinematics(state: &VehicleState, u: ControlInput, dt: f64) -> VehicleState {
    let turn = u.omega * dt;
    let chord = if turn.abs() < ARC_SWITCH {
        u.v * dt
    } else {
        2.0 * u.v / u.omega * (0.5 * turn).sin()
    };
    let mid = state.theta + 0.5 * turn;
    VehicleState::new(
        state.x + chord * mid.cos(),
        state.y + chord * mid.sin(),
        state.theta + turn,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingMeasurement {
    pub rho: f64,
    /// Goal direction relative to the body x-axis, in `(-pi, pi]`.
    pub phi: f64,
}

pub fn measure_range_bearing(state: &VehicleState, goal: &FeaturePoint) -> Result<BearingMeasurement> {
    let dx = goal.x - state.x;
    let dy = goal.y - state.y;
    let rho = dx.hypot(dy);
    if rho == 0.0 {
        return Err(Error::CoincidentPoint);
    }
    Ok(BearingMeasurement {
        rho,
        phi: normalize_angle(dy.atan2(dx) - state.theta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Ccw,
    Cw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleGains {
    pub lambda: f64,
    /// Radius of the circle about the goal.
    pub d_standoff: f64,
}

impl CircleGains {
    pub fn new(lambda: f64, d_standoff: f64) -> Result<Self> {
        let g = Self { lambda, d_standoff };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < self.d_standoff && self.d_standoff.is_finite()) {
            return Err(invalid(format!(
                "circle gains need 0 < lambda < d, got lambda = {}, d = {}",
                self.lambda, self.d_standoff
            )));
        }
        Ok(())
    }
}

/// Range/bearing law. Counterclockwise circling has its equilibrium at
/// `(rho, phi) = (d, pi/2)`; clockwise at `(d, -pi/2)`.
pub fn bearing_law(m: &BearingMeasurement, g: &CircleGains, orientation: Orientation) -> Result<ControlInput> {
    g.validate()?;
    let d = g.d_standoff;
    let turn = m.rho * m.phi.sin();
    Ok(ControlInput {
        v: g.lambda * (m.rho - d),
        omega: match orientation {
            Orientation::Ccw => turn - d,
            Orientation::Cw => turn + d,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: (f64, f64),
    /// World-frame direction angle.
    pub direction: f64,
}

impl Ray {
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        (
            self.origin.0 + s * self.direction.cos(),
            self.origin.1 + s * self.direction.sin(),
        )
    }
}

/// Headings through the vehicle position on which `rho sin(phi) = d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularVariety {
    /// Tangent heading the counterclockwise loop converges along.
    pub stable: Ray,
    pub unstable: Ray,
}

pub fn singular_variety(state: &VehicleState, goal: &FeaturePoint, d_standoff: f64) -> Result<SingularVariety> {
    let m = measure_range_bearing(state, goal)?;
    if !(m.rho > d_standoff) {
        return Err(Error::UndefinedTangent {
            rho: m.rho,
            d: d_standoff,
        });
    }
    let bearing = (goal.y - state.y).atan2(goal.x - state.x);
    let half = (d_standoff / m.rho).asin();
    let origin = state.position();
    Ok(SingularVariety {
        stable: Ray {
            origin,
            direction: normalize_angle(bearing - half),
        },
        unstable: Ray {
            origin,
            direction: normalize_angle(bearing - (PI - half)),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateGains {
    pub epsilon: f64,
    pub v_cap: f64,
}

impl Default for GateGains {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            v_cap: 1.0,
        }
    }
}

impl GateGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.v_cap > 0.0 && self.v_cap.is_finite()) {
            return Err(invalid(format!("v_cap must be positive, got {}", self.v_cap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateRegime {
    /// `d_l < -eps` and `d_r > eps`.
    Interior,
    RightBoundary,
    LeftBoundary,
    BothBoundaries,
}

pub fn gate_regime(d_l: f64, d_r: f64, g: &GateGains) -> GateRegime {
    match (d_r <= g.epsilon, d_l >= -g.epsilon) {
        (false, false) => GateRegime::Interior,
        (true, false) => GateRegime::RightBoundary,
        (false, true) => GateRegime::LeftBoundary,
        (true, true) => GateRegime::BothBoundaries,
    }
}

/// Gate passage law: speed from the summed transit times, turn rate
/// equalizing them, and no turning on the boundary of the image set.
pub fn transit_law(d_l: f64, d_r: f64, tau_l: &TauEstimate, tau_r: &TauEstimate, g: &GateGains) -> ControlInput {
    let v = (tau_l.tau + tau_r.tau).min(g.v_cap).max(0.0);
    let omega = match gate_regime(d_l, d_r, g) {
        GateRegime::Interior => tau_r.tau - tau_l.tau,
        _ => 0.0,
    };
    ControlInput { v, omega }
}
