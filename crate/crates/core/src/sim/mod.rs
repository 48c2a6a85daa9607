//! Closed-loop scenario runners, collision detection and trajectory export.

mod circle;
mod clutter;
mod collision;
mod export;
mod gate;

pub use circle::{run_circle, CircleScenario};
pub use clutter::{
    run_clutter_flight, run_clutter_flight_with, select_gate_features, ClutterConfig, GapSelector, NearestMidpoint,
};
pub use collision::{detect_collision, segment_hit, CollisionHit};
pub use export::{events_json, trajectory_csv, TRAJECTORY_HEADER};
pub use gate::{run_gate, GateScenario, TauSource};

use serde::{Deserialize, Serialize};

use crate::camera::{FeatureProjection, TauEstimate};
use crate::control::{ControlInput, GateRegime, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// No gate law involved (circle runs).
    Free,
    /// Turning toward a gate not yet bracketing the heading.
    Acquire,
    /// Gate law active.
    Controlled,
    /// Past the transit line, straight flight to the gate line.
    Coast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureObservation {
    pub projection: FeatureProjection,
    pub tau: Option<TauEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: VehicleState,
    /// Input applied over `[t, t + dt)`.
    pub input: ControlInput,
    pub phase: Phase,
    pub left: Option<FeatureObservation>,
    pub right: Option<FeatureObservation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    /// The gate law entered a new regime.
    Regime { regime: GateRegime },
    /// The gate law handed over to straight flight at the transit line.
    Transit,
    GateCrossing { x: f64, heading: f64, inside: bool },
    RowCleared { row: usize, x: f64 },
    Collision { row: usize, x: f64, y: f64 },
    NoGapInCone { row: usize },
    FieldExit,
    Converged { rho: f64, phi: f64 },
    Terminal { rho: f64, phi: f64 },
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Time of the sample the event is attached to.
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn last_state(&self) -> Option<VehicleState> {
        self.samples.last().map(|s| s.state)
    }

    pub fn push_event(&mut self, kind: EventKind) {
        let t = self.samples.last().map_or(0.0, |s| s.t);
        self.events.push(Event { t, kind });
    }

    pub fn gate_crossing(&self) -> Option<(f64, f64, bool)> {
        self.events.iter().find_map(|e| match e.kind {
            EventKind::GateCrossing { x, heading, inside } => Some((x, heading, inside)),
            _ => None,
        })
    }

    pub fn timed_out(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Timeout)
    }

    pub fn collided(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Collision { .. }))
    }

    pub fn reached_exit(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::FieldExit)
    }
}

pub(crate) fn check_step(dt: f64, t_max: f64) -> crate::Result<()> {
    if !(dt > 0.0 && dt.is_finite() && t_max > 0.0 && t_max.is_finite()) {
        return Err(crate::error::invalid(format!(
            "need dt > 0 and t_max > 0, got dt = {dt}, t_max = {t_max}"
        )));
    }
    Ok(())
}
