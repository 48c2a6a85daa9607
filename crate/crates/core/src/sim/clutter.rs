use serde::{Deserialize, Serialize};

use super::collision::segment_hit;
use super::gate::{GateController, PoseHistory, TauSource};
use super::{check_step, EventKind, Sample, Trajectory};
use crate::camera::{body_offsets, DiffConfig, FeatureId, FeaturePoint};
use crate::control::{normalize_angle, step_kinematics, ControlInput, GateGains, VehicleState};
use crate::error::{invalid, Error};
use crate::field::{ObstacleField, ObstacleRow};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterConfig {
    pub gains: GateGains,
    pub dt: f64,
    pub t_max: f64,
    /// Gaps lying wholly outside this angle from the heading are ignored.
    pub view_half_angle: f64,
    /// Turn rate while bringing a selected gap into the image set.
    pub omega_acq: f64,
    pub tau_source: TauSource,
    pub diff: DiffConfig,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self {
            gains: GateGains::default(),
            dt: 1e-2,
            t_max: 400.0,
            view_half_angle: 1.0,
            omega_acq: 1.0,
            tau_source: TauSource::default(),
            diff: DiffConfig::with_half_window(2),
        }
    }
}

impl ClutterConfig {
    pub fn validate(&self) -> Result<()> {
        check_step(self.dt, self.t_max)?;
        self.gains.validate()?;
        if !(self.view_half_angle > 0.0 && self.view_half_angle < std::f64::consts::PI) {
            return Err(invalid("view half-angle must lie in (0, pi)"));
        }
        if !(self.omega_acq > 0.0 && self.omega_acq.is_finite()) {
            return Err(invalid("acquisition turn rate must be positive"));
        }
        Ok(())
    }
}

/// Picks the gap of the next row to fly through.
pub trait GapSelector {
    fn select(
        &self,
        state: &VehicleState,
        row: &ObstacleRow,
        row_index: usize,
        view_half_angle: f64,
    ) -> Result<(FeaturePoint, FeaturePoint)>;
}

/// The baseline selector, [`select_gate_features`].
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestMidpoint;

impl GapSelector for NearestMidpoint {
    fn select(
        &self,
        state: &VehicleState,
        row: &ObstacleRow,
        row_index: usize,
        view_half_angle: f64,
    ) -> Result<(FeaturePoint, FeaturePoint)> {
        select_gate_features(state, row, row_index, view_half_angle)
    }
}

/// Slat edges bounding the gap of `row` whose midpoint direction is
/// angularly nearest to the heading. Only gaps overlapping the cone of
/// `view_half_angle` about the heading compete. Ties go to the wider gap,
/// then to the one farther counterclockwise.
pub fn select_gate_features(
    state: &VehicleState,
    row: &ObstacleRow,
    row_index: usize,
    view_half_angle: f64,
) -> Result<(FeaturePoint, FeaturePoint)> {
    const TIE: f64 = 1e-12;
    let y = row.ordinate;
    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    for gap in row.interior_gaps() {
        let lo = FeaturePoint::new(0, gap.lo, y);
        let hi = FeaturePoint::new(0, gap.hi, y);
        if body_offsets(state, &lo).0 <= 1.0 || body_offsets(state, &hi).0 <= 1.0 {
            continue;
        }
        let bearing = |x: f64| normalize_angle((y - state.y).atan2(x - state.x) - state.theta);
        let (a, b) = (bearing(gap.lo), bearing(gap.hi));
        if a.min(b) > view_half_angle || a.max(b) < -view_half_angle {
            continue;
        }
        let off = bearing(0.5 * (gap.lo + gap.hi));
        let width = gap.length();
        let better = match best {
            None => true,
            Some((b_abs, b_width, b_off, _, _)) => {
                if (off.abs() - b_abs).abs() > TIE {
                    off.abs() < b_abs
                } else if (width - b_width).abs() > TIE {
                    width > b_width
                } else {
                    off > b_off
                }
            }
        };
        if better {
            best = Some((off.abs(), width, off, gap.lo, gap.hi));
        }
    }
    let (_, _, _, lo, hi) = best.ok_or(Error::NoGapInCone { row: row_index })?;
    let base = 2 * row_index as FeatureId;
    Ok((FeaturePoint::new(base, lo, y), FeaturePoint::new(base + 1, hi, y)))
}

/// Flies the gate law gap by gap through `field`. For each row the vehicle
/// picks a gap, turns at `omega_acq` until the gap edges bracket the heading,
/// then hands over to the gate law. The run ends on collision, on a row
/// without a visible gap, on clearing the last row, or at `t_max`.
pub fn run_clutter_flight(field: &ObstacleField, cfg: &ClutterConfig, start: VehicleState) -> Result<Trajectory> {
    run_clutter_flight_with(field, cfg, start, &NearestMidpoint)
}

/// [`run_clutter_flight`] with a custom gap selector.
pub fn run_clutter_flight_with(
    field: &ObstacleField,
    cfg: &ClutterConfig,
    start: VehicleState,
    selector: &dyn GapSelector,
) -> Result<Trajectory> {
    cfg.validate()?;
    let first = field.rows.first().ok_or_else(|| invalid("field has no rows"))?;
    if !(start.y < first.ordinate) {
        return Err(invalid("start must lie below the first row"));
    }
    let steps = (cfg.t_max / cfg.dt).ceil() as u64;
    let mut history = PoseHistory::seeded(&start, cfg.dt, cfg.gains.v_cap, 2 * cfg.diff.half_window + 1);
    let mut traj = Trajectory::default();
    let mut state = start;
    let mut target: Option<(usize, FeaturePoint, FeaturePoint)> = None;
    let mut ctl = GateController {
        gains: cfg.gains,
        source: cfg.tau_source,
        diff: cfg.diff,
        omega_acq: cfg.omega_acq,
        coasting: false,
        dt: cfg.dt,
    };

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if k > 0 {
            history.push(t, state);
        }
        let row_index = field.rows.partition_point(|r| r.ordinate <= state.y);
        if row_index == field.n_rows() {
            traj.samples.push(idle(t, state));
            traj.push_event(EventKind::FieldExit);
            break;
        }
        if k == steps {
            traj.samples.push(idle(t, state));
            traj.push_event(EventKind::Timeout);
            break;
        }
        if target.is_none_or(|(r, _, _)| r != row_index) {
            match selector.select(&state, &field.rows[row_index], row_index, cfg.view_half_angle) {
                Ok((l, r)) => {
                    target = Some((row_index, l, r));
                    ctl.coasting = false;
                }
                Err(Error::NoGapInCone { row }) => {
                    traj.samples.push(idle(t, state));
                    traj.push_event(EventKind::NoGapInCone { row });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let (_, left, right) = target.expect("selected above");
        let step = ctl.step(&state, &history, &left, &right);
        traj.samples.push(Sample {
            t,
            state,
            input: step.input,
            phase: step.phase,
            left: step.left,
            right: step.right,
        });
        let next = step_kinematics(&state, step.input, cfg.dt);
        if let Some((row, s)) = first_contact(field, (state.x, state.y), (next.x, next.y)) {
            let x = state.x + s * (next.x - state.x);
            let y = state.y + s * (next.y - state.y);
            traj.samples.push(idle(t + cfg.dt, next));
            traj.push_event(EventKind::Collision { row, x, y });
            break;
        }
        if next.y >= field.rows[row_index].ordinate && state.y < field.rows[row_index].ordinate {
            let r = &field.rows[row_index];
            let s = (r.ordinate - state.y) / (next.y - state.y);
            traj.push_event(EventKind::RowCleared {
                row: row_index,
                x: state.x + s * (next.x - state.x),
            });
        }
        state = next;
    }
    Ok(traj)
}

fn idle(t: f64, state: VehicleState) -> Sample {
    Sample {
        t,
        state,
        input: ControlInput::default(),
        phase: super::Phase::Coast,
        left: None,
        right: None,
    }
}

fn first_contact(field: &ObstacleField, p0: (f64, f64), p1: (f64, f64)) -> Option<(usize, f64)> {
    let (lo, hi) = if p0.1 <= p1.1 { (p0.1, p1.1) } else { (p1.1, p0.1) };
    let start = field.rows.partition_point(|r| r.ordinate < lo);
    let end = field.rows.partition_point(|r| r.ordinate <= hi);
    (start..end)
        .filter_map(|k| segment_hit(p0, p1, &field.rows[k]).map(|s| (k, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}
