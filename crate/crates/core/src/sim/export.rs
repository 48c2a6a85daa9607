use serde_json::json;

use super::{FeatureObservation, Trajectory};

pub const TRAJECTORY_HEADER: &str = "t,x,y,theta,v,omega,d_l,d_r,tau_l,tau_r";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn image(o: &Option<FeatureObservation>) -> Option<f64> {
    o.map(|o| o.projection.d_img)
}

fn tau(o: &Option<FeatureObservation>) -> Option<f64> {
    o.and_then(|o| o.tau).map(|t| t.tau)
}

/// One line per sample; missing measurements are empty fields.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 * (traj.samples.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &traj.samples {
        let row = [
            s.t.to_string(),
            s.state.x.to_string(),
            s.state.y.to_string(),
            s.state.theta.to_string(),
            s.input.v.to_string(),
            s.input.omega.to_string(),
            cell(image(&s.left)),
            cell(image(&s.right)),
            cell(tau(&s.left)),
            cell(tau(&s.right)),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Versioned JSON document listing the trajectory's events.
pub fn events_json(traj: &Trajectory) -> serde_json::Value {
    json!({ "schema": 1, "events": traj.events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ControlInput, VehicleState};
    use crate::sim::{EventKind, Phase, Sample};

    #[test]
    fn csv_and_events_shape() {
        let mut traj = Trajectory::default();
        traj.samples.push(Sample {
            t: 0.0,
            state: VehicleState::new(1.0, 2.0, 0.5),
            input: ControlInput { v: 1.0, omega: 0.0 },
            phase: Phase::Free,
            left: None,
            right: None,
        });
        traj.push_event(EventKind::Timeout);
        let csv = trajectory_csv(&traj);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines[1], "0,1,2,0.5,1,0,,,,");
        let ev = events_json(&traj);
        assert_eq!(ev["schema"], 1);
        assert_eq!(ev["events"][0]["kind"], "timeout");
        assert_eq!(ev["events"][0]["t"], 0.0);
    }
}
