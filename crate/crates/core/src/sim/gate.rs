use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::{check_step, EventKind, FeatureObservation, Phase, Sample, Trajectory};
use crate::camera::{body_offsets, project, tau_from_track, DiffConfig, FeaturePoint, TauEstimate};
use crate::control::{gate_regime, step_kinematics, transit_law, ControlInput, GateGains, GateRegime, VehicleState};
use crate::error::invalid;
use crate::Result;

/// How the gate law's transit times are obtained from the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TauSource {
    /// Past image samples re-rendered from the current heading line: each
    /// past pose keeps its along-heading displacement and takes the current
    /// heading. Removes rotational flow and lateral slip, leaving the
    /// looming a straight flight would have produced.
    #[default]
    DerotatedTrack,
    /// Image samples exactly as recorded, rotation included.
    RawTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateScenario {
    pub left_feature: FeaturePoint,
    pub right_feature: FeaturePoint,
    pub start: VehicleState,
    pub gains: GateGains,
    pub dt: f64,
    pub t_max: f64,
    pub tau_source: TauSource,
    pub diff: DiffConfig,
}

impl GateScenario {
    pub fn new(left_feature: FeaturePoint, right_feature: FeaturePoint, start: VehicleState) -> Self {
        Self {
            left_feature,
            right_feature,
            start,
            gains: GateGains::default(),
            dt: 1e-3,
            t_max: 60.0,
            tau_source: TauSource::default(),
            diff: DiffConfig::with_half_window(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_step(self.dt, self.t_max)?;
        self.gains.validate()?;
        if self.left_feature.y != self.right_feature.y {
            return Err(invalid("gate features must share one ordinate"));
        }
        if !(self.left_feature.x < self.right_feature.x) {
            return Err(invalid("left gate feature must lie left of the right one"));
        }
        if !(self.start.y < self.left_feature.y) {
            return Err(invalid("start must lie below the gate line"));
        }
        Ok(())
    }
}

/// Recent poses of the vehicle, used to build image tracks.
pub(crate) struct PoseHistory {
    poses: VecDeque<(f64, VehicleState)>,
    cap: usize,
}

impl PoseHistory {
    /// History as if the vehicle had flown straight into `start` at `speed`.
    pub(crate) fn seeded(start: &VehicleState, dt: f64, speed: f64, cap: usize) -> Self {
        let (s, c) = start.theta.sin_cos();
        let poses = (0..cap)
            .rev()
            .map(|j| {
                let back = j as f64 * dt;
                (
                    -back,
                    VehicleState {
                        x: start.x - speed * back * c,
                        y: start.y - speed * back * s,
                        theta: start.theta,
                    },
                )
            })
            .collect();
        Self { poses, cap }
    }

    pub(crate) fn push(&mut self, t: f64, state: VehicleState) {
        if self.poses.len() == self.cap {
            self.poses.pop_front();
        }
        self.poses.push_back((t, state));
    }

    pub(crate) fn observe(
        &self,
        feat: &FeaturePoint,
        source: TauSource,
        diff: &DiffConfig,
    ) -> Result<FeatureObservation> {
        let &(_, now) = self.poses.back().expect("seeded history");
        let (hs, hc) = now.theta.sin_cos();
        let track = self
            .poses
            .iter()
            .map(|&(t, pose)| {
                let view = match source {
                    TauSource::DerotatedTrack => {
                        let back = (pose.x - now.x) * hc + (pose.y - now.y) * hs;
                        VehicleState {
                            x: now.x + back * hc,
                            y: now.y + back * hs,
                            theta: now.theta,
                        }
                    }
                    TauSource::RawTrack => pose,
                };
                project(&view, feat, 1.0, t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureObservation {
            projection: *track.last().expect("nonempty track"),
            tau: tau_from_track(&track, diff).ok(),
        })
    }
}

/// One controller evaluation shared by the gate and clutter runners.
pub(crate) struct GateStep {
    pub input: ControlInput,
    pub phase: Phase,
    pub left: Option<FeatureObservation>,
    pub right: Option<FeatureObservation>,
    pub regime: Option<GateRegime>,
}

/// Per-gate controller state.
pub(crate) struct GateController {
    pub gains: GateGains,
    pub source: TauSource,
    pub diff: DiffConfig,
    /// Turn rate used while the gate does not bracket the heading; zero
    /// disables acquisition.
    pub omega_acq: f64,
    pub coasting: bool,
    pub dt: f64,
}

impl GateController {
    pub(crate) fn step(
        &mut self,
        state: &VehicleState,
        history: &PoseHistory,
        left: &FeaturePoint,
        right: &FeaturePoint,
    ) -> GateStep {
        let coast = |left, right| GateStep {
            input: ControlInput {
                v: self.gains.v_cap,
                omega: 0.0,
            },
            phase: Phase::Coast,
            left,
            right,
            regime: None,
        };
        if self.coasting {
            return coast(None, None);
        }
        let (along_l, _) = body_offsets(state, left);
        let (along_r, _) = body_offsets(state, right);
        let obs = (
            history.observe(left, self.source, &self.diff),
            history.observe(right, self.source, &self.diff),
        );
        let (ol, or) = match obs {
            (Ok(l), Ok(r)) if along_l > 1.0 && along_r > 1.0 => (l, r),
            (l, r) => {
                self.coasting = true;
                return coast(l.ok(), r.ok());
            }
        };
        let (d_l, d_r) = (ol.projection.d_img, or.projection.d_img);
        if self.omega_acq > 0.0 && (d_r <= 0.0 || d_l >= 0.0) {
            let omega = if d_r <= 0.0 { self.omega_acq } else { -self.omega_acq };
            return GateStep {
                input: ControlInput {
                    v: self.gains.v_cap,
                    omega,
                },
                phase: Phase::Acquire,
                left: Some(ol),
                right: Some(or),
                regime: None,
            };
        }
        let (tl, tr): (TauEstimate, TauEstimate) = match (ol.tau, or.tau) {
            (Some(l), Some(r)) if l.tau > 0.0 && r.tau > 0.0 => (l, r),
            _ => {
                self.coasting = true;
                return coast(Some(ol), Some(or));
            }
        };
        let mut input = transit_law(d_l, d_r, &tl, &tr, &self.gains);
        input.omega = self.limit_turn(state, input, left, right);
        GateStep {
            input,
            phase: Phase::Controlled,
            left: Some(ol),
            right: Some(or),
            regime: Some(gate_regime(d_l, d_r, &self.gains)),
        }
    }
}

impl GateController {
    /// Largest fraction of the commanded turn that keeps the next sample
    /// inside the image set; the sampled form of the no-turn boundary rule.
    fn limit_turn(&self, state: &VehicleState, u: ControlInput, left: &FeaturePoint, right: &FeaturePoint) -> f64 {
        if u.omega == 0.0 {
            return 0.0;
        }
        let eps = self.gains.epsilon;
        let inside = |omega: f64| {
            let next = step_kinematics(state, ControlInput { omega, ..u }, self.dt);
            match (project(&next, left, 1.0, 0.0), project(&next, right, 1.0, 0.0)) {
                (Ok(l), Ok(r)) => l.d_img <= -eps && r.d_img >= eps,
                _ => true,
            }
        };
        if inside(u.omega) {
            return u.omega;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if inside(mid * u.omega) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo * u.omega
    }
}

/// Flies the gate law until the gate line `y = y_gate` is crossed or `t_max`
/// runs out. The law is active until either feature reaches the image plane
/// (or its transit time runs out); the vehicle then holds its heading at
/// `v_cap` to the gate line.
pub fn run_gate(s: &GateScenario) -> Result<Trajectory> {
    s.validate()?;
    let y_gate = s.left_feature.y;
    let steps = (s.t_max / s.dt).ceil() as u64;
    let cap = 2 * s.diff.half_window + 1;
    let mut history = PoseHistory::seeded(&s.start, s.dt, s.gains.v_cap, cap);
    let mut ctl = GateController {
        gains: s.gains,
        source: s.tau_source,
        diff: s.diff,
        omega_acq: 0.0,
        coasting: false,
        dt: s.dt,
    };
    let mut traj = Trajectory::default();
    let mut state = s.start;
    let mut regime = None;
    for k in 0..=steps {
        let t = k as f64 * s.dt;
        if k > 0 {
            history.push(t, state);
        }
        if k == steps {
            traj.samples.push(Sample {
                t,
                state,
                input: ControlInput::default(),
                phase: if ctl.coasting { Phase::Coast } else { Phase::Controlled },
                left: None,
                right: None,
            });
            traj.push_event(EventKind::Timeout);
            break;
        }
        let was_coasting = ctl.coasting;
        let step = ctl.step(&state, &history, &s.left_feature, &s.right_feature);
        traj.samples.push(Sample {
            t,
            state,
            input: step.input,
            phase: step.phase,
            left: step.left,
            right: step.right,
        });
        if ctl.coasting && !was_coasting {
            traj.push_event(EventKind::Transit);
        }
        if let Some(r) = step.regime.filter(|r| regime != Some(*r)) {
            regime = Some(r);
            traj.push_event(EventKind::Regime { regime: r });
        }
        let next = step_kinematics(&state, step.input, s.dt);
        if next.y >= y_gate && state.y < y_gate {
            let frac = (y_gate - state.y) / (next.y - state.y);
            let x = state.x + frac * (next.x - state.x);
            traj.samples.push(Sample {
                t: t + s.dt,
                state: next,
                input: step.input,
                phase: step.phase,
                left: None,
                right: None,
            });
            traj.push_event(EventKind::GateCrossing {
                x,
                heading: next.theta,
                inside: s.left_feature.x < x && x < s.right_feature.x,
            });
            break;
        }
        state = next;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn gate() -> (FeaturePoint, FeaturePoint) {
        (FeaturePoint::new(0, -1.0, 10.0), FeaturePoint::new(1, 1.0, 10.0))
    }

    #[test]
    fn symmetric_start_stays_on_bisector() {
        let (l, r) = gate();
        let s = GateScenario::new(l, r, VehicleState::new(0.0, 0.0, FRAC_PI_2));
        let traj = run_gate(&s).unwrap();
        let (x, heading, inside) = traj.gate_crossing().expect("crossed");
        assert!(inside && x.abs() < 1e-6);
        assert!((heading - FRAC_PI_2).abs() < 1e-2);
        assert!(traj.samples.iter().all(|p| p.state.x.abs() < 1e-9));
    }

    #[test]
    fn validation() {
        let (l, r) = gate();
        let start = VehicleState::new(0.0, 0.0, FRAC_PI_2);
        assert!(run_gate(&GateScenario::new(r, l, start)).is_err());
        assert!(run_gate(&GateScenario::new(l, r, VehicleState::new(0.0, 11.0, 0.0))).is_err());
        let mut bad = GateScenario::new(l, FeaturePoint::new(1, 1.0, 9.0), start);
        assert!(run_gate(&bad).is_err());
        bad.right_feature.y = 10.0;
        bad.gains.epsilon = -1.0;
        assert!(run_gate(&bad).is_err());
    }

    #[test]
    fn timeout_is_an_event() {
        let (l, r) = gate();
        let mut s = GateScenario::new(l, r, VehicleState::new(0.0, 0.0, FRAC_PI_2));
        s.t_max = 0.5;
        let traj = run_gate(&s).unwrap();
        assert!(traj.timed_out() && traj.gate_crossing().is_none());
    }
}
