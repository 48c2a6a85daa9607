use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::{check_step, EventKind, Phase, Sample, Trajectory};
use crate::camera::FeaturePoint;
use crate::control::{
    bearing_law, measure_range_bearing, step_kinematics, CircleGains, Orientation, VehicleState,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleScenario {
    pub goal: FeaturePoint,
    pub gains: CircleGains,
    pub orientation: Orientation,
    pub start: VehicleState,
    pub dt: f64,
    pub t_max: f64,
    /// Stop once both `|rho - d|` and the bearing error fall below this.
    pub stop_tol: Option<f64>,
    /// Keep every `record_every`-th sample (the final one is always kept).
    pub record_every: usize,
}

impl CircleScenario {
    pub fn new(goal: FeaturePoint, gains: CircleGains, start: VehicleState) -> Self {
        Self {
            goal,
            gains,
            orientation: Orientation::Ccw,
            start,
            dt: 1e-3,
            t_max: 100.0,
            stop_tol: None,
            record_every: 1,
        }
    }

    fn target_phi(&self) -> f64 {
        match self.orientation {
            Orientation::Ccw => FRAC_PI_2,
            Orientation::Cw => -FRAC_PI_2,
        }
    }
}

/// Closed loop under the range/bearing law. The last event is `Converged`
/// or `Timeout`, followed by `Terminal` with the final measurement.
pub fn run_circle(s: &CircleScenario) -> Result<Trajectory> {
    check_step(s.dt, s.t_max)?;
    s.gains.validate()?;
    let stride = s.record_every.max(1);
    let steps = (s.t_max / s.dt).ceil() as u64;
    let mut traj = Trajectory::default();
    let mut state = s.start;
    let target = s.target_phi();
    let mut k = 0u64;
    loop {
        let t = k as f64 * s.dt;
        let m = measure_range_bearing(&state, &s.goal)?;
        let u = bearing_law(&m, &s.gains, s.orientation)?;
        let converged = s.stop_tol.is_some_and(|tol| {
            (m.rho - s.gains.d_standoff).abs() < tol && (m.phi - target).abs() < tol
        });
        let last = converged || k >= steps;
        if last || k.is_multiple_of(stride as u64) {
            traj.samples.push(Sample {
                t,
                state,
                input: u,
                phase: Phase::Free,
                left: None,
                right: None,
            });
        }
        if last {
            traj.push_event(if converged {
                EventKind::Converged { rho: m.rho, phi: m.phi }
            } else {
                EventKind::Timeout
            });
            traj.push_event(EventKind::Terminal { rho: m.rho, phi: m.phi });
            return Ok(traj);
        }
        state = step_kinematics(&state, u, s.dt);
        k += 1;
    }
}
