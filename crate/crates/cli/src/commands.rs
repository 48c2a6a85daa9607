use serde_json::json;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use tautransit::analytic::{collision_free_prob, SteeringModel};
use tautransit::camera::{DiffConfig, FeaturePoint};
use tautransit::control::{CircleGains, Orientation, VehicleState};
use tautransit::dubins::{mc_phase_sweep, EdgePolicy, HeadingMode, ProtocolConfig};
use tautransit::field::{sample_field, FieldParams, Interval, ObstacleField};
use tautransit::rng::substream;
use tautransit::sim::{
    events_json, run_circle, run_clutter_flight, run_gate, trajectory_csv, CircleScenario, ClutterConfig, EventKind,
    GateScenario, TauSource, Trajectory,
};

use crate::config::{Config, FlyKind, Format, ECHO_PREFIX};
use crate::error::CliError;

pub struct Output {
    pub text: String,
    /// Events document written next to a CSV trajectory.
    pub sidecar: Option<String>,
    /// One line for stderr.
    pub summary: Option<String>,
    pub check_failure: Option<String>,
}

impl Output {
    fn text(text: String) -> Self {
        Self {
            text,
            sidecar: None,
            summary: None,
            check_failure: None,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `x` rounded to `digits` significant digits, fixed notation where readable.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..15).contains(&e) {
        let decimals = (digits as i32 - 1 - e).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{:.*e}", digits - 1, x)
    }
}

fn csv_head(cfg: &Config, header: &str) -> String {
    format!("{ECHO_PREFIX}{}\n{header}\n", cfg.echo())
}

fn json_doc(cfg: &Config, mut body: serde_json::Value) -> String {
    body["config"] = serde_json::to_value(cfg).expect("config serializes");
    let mut s = serde_json::to_string(&body).expect("json value serializes");
    s.push('\n');
    s
}

fn format_of(cfg: &mut Config) -> Format {
    *cfg.format.get_or_insert(Format::Csv)
}

fn seed_of(cfg: &Config) -> u64 {
    cfg.seed.expect("seed resolved before dispatch")
}

/// Field rates with the reference values as defaults.
fn field_params(cfg: &mut Config) -> Result<FieldParams, CliError> {
    let r = FieldParams::reference(0);
    let f = &mut cfg.field;
    let p = FieldParams::new(
        *f.alpha.get_or_insert(r.alpha),
        *f.beta.get_or_insert(r.beta),
        *f.gamma.get_or_insert(r.gamma),
        seed_of(cfg),
    )?;
    Ok(p)
}

fn build_field(cfg: &mut Config) -> Result<ObstacleField, CliError> {
    let params = field_params(cfg)?;
    let rows = *cfg.field.rows.get_or_insert(10);
    let [lo, hi] = *cfg.field.extent.get_or_insert([-500.0, 500.0]);
    let jitter = *cfg.field.jitter.get_or_insert(false);
    Ok(sample_field(&params, rows, Interval::new(lo, hi)?, jitter)?)
}

pub fn generate_field(mut cfg: Config) -> Result<Output, CliError> {
    let field = build_field(&mut cfg)?;
    let text = match format_of(&mut cfg) {
        Format::Csv => {
            let mut s = csv_head(&cfg, "row,ordinate,lo,hi");
            for (k, row) in field.rows.iter().enumerate() {
                for slat in &row.slats {
                    writeln!(s, "{k},{},{},{}", row.ordinate, slat.lo, slat.hi).expect("string write");
                }
            }
            s
        }
        Format::Json => {
            let doc: serde_json::Value = serde_json::from_str(&field.to_json()).expect("field json parses");
            json_doc(&cfg, json!({ "field": doc }))
        }
    };
    let occupied: f64 = field.rows.iter().map(|r| r.occupied_length()).sum();
    let total = field.extent.length() * field.n_rows() as f64;
    let mut out = Output::text(text);
    out.summary = Some(format!(
        "{} rows, occupied fraction {:.5} (stationary {:.5})",
        field.n_rows(),
        occupied / total,
        field.params.stationary()?.p2
    ));
    Ok(out)
}

fn theta_grid(cfg: &mut Config, default: &[f64]) -> Result<Vec<f64>, CliError> {
    if let Some([start, stop, step]) = cfg.grid.theta_range.take() {
        if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
            return Err(usage("theta_range needs start <= stop and step > 0"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        cfg.grid.theta = Some((0..count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect());
    }
    let grid = cfg.grid.theta.get_or_insert_with(|| default.to_vec()).clone();
    if grid.is_empty() {
        return Err(usage("theta grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|t| !(**t >= 0.0 && **t < FRAC_PI_2)) {
        return Err(usage(format!("theta_cr must lie in [0, pi/2), got {bad}")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("theta grid must be strictly increasing"));
    }
    Ok(grid)
}

fn n_grid(cfg: &mut Config, default: &[u64]) -> Result<Vec<u64>, CliError> {
    let ns = cfg.grid.n.get_or_insert_with(|| default.to_vec()).clone();
    if ns.is_empty() || ns.contains(&0) {
        return Err(usage("row counts must be a non-empty list of positive integers"));
    }
    Ok(ns)
}

pub fn analytic_table(mut cfg: Config) -> Result<Output, CliError> {
    let params = field_params(&mut cfg)?;
    let thetas = theta_grid(&mut cfg, &(0..=16).map(|i| i as f64 * 0.05).collect::<Vec<_>>())?;
    let ns = n_grid(&mut cfg, &[5, 10, 20, 50, 100])?;
    let dist = params.stationary()?;
    let mut rows = Vec::new();
    for &n in &ns {
        for &theta in &thetas {
            let steer = SteeringModel::new(theta, params.alpha_over_gamma())?;
            rows.push((n, theta, collision_free_prob(&dist, &steer, n)?));
        }
    }
    let text = match format_of(&mut cfg) {
        Format::Csv => {
            let mut s = csv_head(&cfg, "n,theta_cr,p_analytic");
            for (n, theta, p) in &rows {
                writeln!(s, "{n},{theta},{}", sig(*p, 12)).expect("string write");
            }
            s
        }
        Format::Json => {
            let list: Vec<_> = rows
                .iter()
                .map(|(n, theta, p)| json!({ "n": n, "theta_cr": theta, "p_analytic": p }))
                .collect();
            json_doc(&cfg, json!({ "rows": list }))
        }
    };
    Ok(Output::text(text))
}

pub fn mc_sweep(mut cfg: Config, check: bool) -> Result<Output, CliError> {
    let params = field_params(&mut cfg)?;
    let thetas = theta_grid(&mut cfg, &[0.0, 0.05, 0.1, 0.2, 0.4])?;
    let ns = n_grid(&mut cfg, &[10])?;
    let pr = &mut cfg.protocol;
    let trials = *pr.trials.get_or_insert(10_000);
    if trials == 0 {
        return Err(usage("trials must be at least 1"));
    }
    let template = ProtocolConfig {
        theta_cr: 0.0,
        policy: *pr.policy.get_or_insert(EdgePolicy::Forward),
        heading_mode: *pr.heading_mode.get_or_insert(HeadingMode::ResetToAxis),
        clearance: *pr.clearance.get_or_insert(0.0),
    };
    template.validate()?;
    let seed = seed_of(&cfg);
    let dist = params.stationary()?;
    let mut points = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let sweep = mc_phase_sweep(&params, n as usize, &thetas, trials, substream(seed, j as u64), &template)?;
        for mut p in sweep.points {
            // always the one-sided closed form, whatever the protocol variant
            let steer = SteeringModel::new(p.theta_cr, params.alpha_over_gamma())?;
            p.analytic = Some(collision_free_prob(&dist, &steer, n)?);
            points.push(p);
        }
    }
    let outside: Vec<String> = points
        .iter()
        .filter(|p| p.within(3.0) == Some(false))
        .map(|p| format!("theta_cr={} n={}", p.theta_cr, p.n_rows))
        .collect();
    let text = match format_of(&mut cfg) {
        Format::Csv => {
            let mut s = csv_head(&cfg, "theta_cr,n,trials,successes,estimate,stderr,analytic");
            for p in &points {
                let analytic = p.analytic.map(|a| sig(a, 12)).unwrap_or_default();
                writeln!(
                    s,
                    "{},{},{},{},{},{},{analytic}",
                    p.theta_cr, p.n_rows, p.summary.trials, p.summary.successes, p.summary.estimate, p.summary.stderr
                )
                .expect("string write");
            }
            s
        }
        Format::Json => json_doc(&cfg, json!({ "points": points })),
    };
    let mut out = Output::text(text);
    out.summary = Some(format!(
        "{} points, {} outside 3 stderr of the closed form",
        points.len(),
        outside.len()
    ));
    if check && !outside.is_empty() {
        out.check_failure = Some(format!("outside 3 stderr: {}", outside.join(", ")));
    }
    Ok(out)
}

fn start_of(cfg: &mut Config, default: [f64; 3]) -> VehicleState {
    let [x, y, theta] = *cfg.fly.start.get_or_insert(default);
    VehicleState::new(x, y, theta)
}

fn fly_gate(cfg: &mut Config) -> Result<Trajectory, CliError> {
    let start = start_of(cfg, [0.0, 0.0, FRAC_PI_2]);
    let f = &mut cfg.fly;
    let [lx, ly] = *f.left.get_or_insert([-1.0, 10.0]);
    let [rx, ry] = *f.right.get_or_insert([1.0, 10.0]);
    let mut s = GateScenario::new(FeaturePoint::new(0, lx, ly), FeaturePoint::new(1, rx, ry), start);
    s.dt = *f.dt.get_or_insert(s.dt);
    s.t_max = *f.t_max.get_or_insert(s.t_max);
    s.gains.epsilon = *f.epsilon.get_or_insert(s.gains.epsilon);
    s.gains.v_cap = *f.v_cap.get_or_insert(s.gains.v_cap);
    s.tau_source = *f.tau_source.get_or_insert(s.tau_source);
    s.diff = DiffConfig::with_half_window(*f.half_window.get_or_insert(s.diff.half_window));
    Ok(run_gate(&s)?)
}

fn fly_circle(cfg: &mut Config) -> Result<Trajectory, CliError> {
    let start = start_of(cfg, [5.0, 0.0, FRAC_PI_2]);
    let f = &mut cfg.fly;
    let [gx, gy] = *f.goal.get_or_insert([0.0, 0.0]);
    let gains = CircleGains::new(*f.lambda.get_or_insert(0.5), *f.standoff.get_or_insert(1.0))?;
    let mut s = CircleScenario::new(FeaturePoint::new(0, gx, gy), gains, start);
    s.orientation = *f.orientation.get_or_insert(Orientation::Ccw);
    s.dt = *f.dt.get_or_insert(s.dt);
    s.t_max = *f.t_max.get_or_insert(s.t_max);
    s.stop_tol = f.stop_tol;
    s.record_every = *f.record_every.get_or_insert(s.record_every);
    Ok(run_circle(&s)?)
}

fn fly_clutter(cfg: &mut Config) -> Result<Trajectory, CliError> {
    let field = match &cfg.fly.field_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.clone(),
                source: e,
            })?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let body = doc.get("field").unwrap_or(&doc);
            ObstacleField::from_json(&body.to_string())?
        }
        None => build_field(cfg)?,
    };
    let start = start_of(cfg, [0.0, 0.0, FRAC_PI_2]);
    let f = &mut cfg.fly;
    let mut c = ClutterConfig::default();
    c.dt = *f.dt.get_or_insert(c.dt);
    c.t_max = *f.t_max.get_or_insert(c.t_max);
    c.gains.epsilon = *f.epsilon.get_or_insert(c.gains.epsilon);
    c.gains.v_cap = *f.v_cap.get_or_insert(c.gains.v_cap);
    c.tau_source = *f.tau_source.get_or_insert(TauSource::default());
    c.diff = DiffConfig::with_half_window(*f.half_window.get_or_insert(c.diff.half_window));
    c.view_half_angle = *f.view_half_angle.get_or_insert(c.view_half_angle);
    c.omega_acq = *f.omega_acq.get_or_insert(c.omega_acq);
    Ok(run_clutter_flight(&field, &c, start)?)
}

fn outcome(traj: &Trajectory) -> String {
    let last = traj
        .events
        .iter()
        .rev()
        .find(|e| !matches!(e.kind, EventKind::Regime { .. } | EventKind::Terminal { .. }));
    let terminal = traj.events.iter().find_map(|e| match e.kind {
        EventKind::Terminal { rho, phi } => Some(format!(", rho {rho:.6}, phi {phi:.6}")),
        _ => None,
    });
    match last {
        Some(e) => format!(
            "outcome at t = {}: {}{}",
            e.t,
            serde_json::to_string(&e.kind).expect("event serializes"),
            terminal.unwrap_or_default()
        ),
        None => "no events".to_string(),
    }
}

pub fn fly(mut cfg: Config) -> Result<Output, CliError> {
    let kind = cfg
        .fly
        .kind
        .ok_or_else(|| usage("fly needs a scenario kind: gate, circle or clutter"))?;
    let traj = match kind {
        FlyKind::Gate => fly_gate(&mut cfg)?,
        FlyKind::Circle => fly_circle(&mut cfg)?,
        FlyKind::Clutter => fly_clutter(&mut cfg)?,
    };
    let mut events = events_json(&traj);
    let mut out = match format_of(&mut cfg) {
        Format::Csv => {
            let mut text = format!("{ECHO_PREFIX}{}\n", cfg.echo());
            text.push_str(&trajectory_csv(&traj));
            events["config"] = serde_json::to_value(&cfg).expect("config serializes");
            let mut side = serde_json::to_string(&events).expect("events serialize");
            side.push('\n');
            let mut o = Output::text(text);
            o.sidecar = Some(side);
            o
        }
        Format::Json => Output::text(json_doc(
            &cfg,
            json!({ "schema": 1, "samples": traj.samples, "events": traj.events }),
        )),
    };
    out.summary = Some(outcome(&traj));
    Ok(out)
}
