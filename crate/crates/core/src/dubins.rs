//! Quantized Dubins vehicle and the row-by-row steering protocol.
//!
//! The vehicle flies straight chords between rows. Approaching a row it
//! checks where its current chord would land; if that point is on a slat it
//! may swing its heading by at most `theta_cr` to graze a slat edge instead.
//! Monte Carlo drivers here estimate the resulting collision-free probability.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::analytic::{self, SteeringModel};
use crate::error::{invalid, Error, Result};
use crate::field::{
    row_ordinates, sample_slats_into, FieldParams, Interval, ObstacleField, ObstacleRow,
    StationaryDistribution,
};
use crate::rng::{rng_for, substream, tags, SimRng};

/// Which slat edge the protocol tries to steer past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdgePolicy {
    /// Always the edge in the `+s` direction. The available lateral reach is
    /// compared against that single exponential residual, which is the
    /// evasion law of the closed-form transit probability.
    #[default]
    Forward,
    /// Whichever edge is closer (ties go left). The nearer of two independent
    /// exponential residuals has twice the rate, see [`nearest_edge_collision_free_prob`].
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeadingMode {
    /// Heading returns to the transit axis after each row; rows are then i.i.d.
    #[default]
    ResetToAxis,
    /// Post-steer heading persists into the next row (no closed form).
    Retain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub theta_cr: f64,
    pub policy: EdgePolicy,
    pub heading_mode: HeadingMode,
    /// Extra lateral clearance past the slat edge.
    pub clearance: f64,
}

impl ProtocolConfig {
    pub fn new(theta_cr: f64) -> Result<Self> {
        let c = Self {
            theta_cr,
            policy: EdgePolicy::Forward,
            heading_mode: HeadingMode::ResetToAxis,
            clearance: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_policy(mut self, policy: EdgePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_heading_mode(mut self, mode: HeadingMode) -> Self {
        self.heading_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_cr >= 0.0 && self.theta_cr < FRAC_PI_2) {
            return Err(invalid(format!("theta_cr must lie in [0, pi/2), got {}", self.theta_cr)));
        }
        if !(self.clearance >= 0.0 && self.clearance.is_finite()) {
            return Err(invalid("clearance must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Heading of the vehicle relative to the transit axis; positive toward `+x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizedState {
    pub x: f64,
    pub row_index: usize,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteerDecision {
    /// Arrival point is open; keep flying.
    Pass,
    /// Change heading by `delta_theta`, landing at `target_x` on the row.
    Steer { delta_theta: f64, target_x: f64 },
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitOutcome {
    pub rows_cleared: usize,
    pub collided: bool,
    /// `(x, ordinate)` vertices starting at the entry point.
    pub path: Vec<(f64, f64)>,
    /// Heading of the chord ending at each vertex after the first.
    pub headings: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub trials: u64,
    pub successes: u64,
    pub estimate: f64,
    pub stderr: f64,
}

impl McSummary {
    pub fn new(trials: u64, successes: u64) -> Self {
        assert!(trials > 0 && successes <= trials);
        let p = successes as f64 / trials as f64;
        Self {
            trials,
            successes,
            estimate: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    /// `|estimate - expected| <= k * stderr`. A degenerate sample (all
    /// successes or none) has zero sample error and falls back to the
    /// binomial error implied by `expected`.
    pub fn agrees_with(&self, expected: f64, k: f64) -> bool {
        let se = if self.stderr > 0.0 {
            self.stderr
        } else {
            (expected * (1.0 - expected) / self.trials as f64).sqrt()
        };
        (self.estimate - expected).abs() <= k * se
    }
}

/// Decision for a vehicle flying along the transit axis that would arrive
/// at `x_arrival` on `row`, a distance `row_gap` ahead.
pub fn steer_decision(
    x_arrival: f64,
    row: &ObstacleRow,
    theta_cr: f64,
    row_gap: f64,
    policy: EdgePolicy,
    clearance: f64,
) -> Result<SteerDecision> {
    if !(row_gap > 0.0) {
        return Err(invalid(format!("row_gap must be positive, got {row_gap}")));
    }
    let cfg = ProtocolConfig {
        theta_cr,
        policy,
        heading_mode: HeadingMode::ResetToAxis,
        clearance,
    };
    cfg.validate()?;
    decide(x_arrival, 0.0, row, row_gap, &cfg, 0)
}

fn decide(
    x: f64,
    heading: f64,
    row: &ObstacleRow,
    row_gap: f64,
    cfg: &ProtocolConfig,
    row_index: usize,
) -> Result<SteerDecision> {
    let arrival = x + row_gap * heading.tan();
    let exhausted = |at: f64| Error::ExtentExhausted { row: row_index, x: at };
    let slat = match row.slat_at(arrival) {
        Err(_) => return Err(exhausted(arrival)),
        Ok(None) => return Ok(SteerDecision::Pass),
        Ok(Some(i)) => row.slats[i],
    };
    if cfg.theta_cr == 0.0 {
        // no authority: straight pass-through uses the closed-slat convention
        return Ok(SteerDecision::Collision);
    }
    let reach = row_gap * cfg.theta_cr.tan();
    let clipped_lo = slat.lo <= row.extent.lo;
    let clipped_hi = slat.hi >= row.extent.hi;
    let left = (slat.lo - cfg.clearance, clipped_lo);
    let right = (slat.hi + cfg.clearance, clipped_hi);
    let candidates: &[(f64, bool)] = match cfg.policy {
        EdgePolicy::Forward => &[right],
        EdgePolicy::Nearest => {
            if arrival - slat.lo <= slat.hi - arrival {
                &[left, right]
            } else {
                &[right, left]
            }
        }
    };

    let mut best: Option<(f64, f64)> = None;
    for &(target, clipped) in candidates {
        if (target - x).abs() > reach {
            continue;
        }
        let new_heading = ((target - x) / row_gap).atan();
        let delta = new_heading - heading;
        if delta.abs() > cfg.theta_cr {
            continue;
        }
        if clipped || !row.extent.contains(target) {
            return Err(exhausted(target));
        }
        if best.is_none_or(|(d, _)| delta.abs() < d.abs()) {
            best = Some((delta, target));
        }
        if cfg.heading_mode == HeadingMode::ResetToAxis {
            // candidates are ordered by distance, the first reachable is minimal
            break;
        }
    }
    Ok(match best {
        Some((delta_theta, target_x)) => SteerDecision::Steer {
            delta_theta,
            target_x,
        },
        None => SteerDecision::Collision,
    })
}

/// Supplies the rows a transit flies through.
trait RowSource {
    fn ordinate(&self, k: usize) -> f64;
    /// Row `k`; `x` and `reach` describe the lateral window the protocol will
    /// inspect.
    fn row(&mut self, k: usize, x: f64, reach: f64) -> &ObstacleRow;
}

struct MaterializedRows<'a>(&'a ObstacleField);

impl RowSource for MaterializedRows<'_> {
    fn ordinate(&self, k: usize) -> f64 {
        self.0.rows[k].ordinate
    }

    fn row(&mut self, k: usize, _x: f64, _reach: f64) -> &ObstacleRow {
        &self.0.rows[k]
    }
}

#[derive(Debug, Clone)]
enum Layout {
    Flat { spacing: f64 },
    Listed(Vec<f64>),
}

/// Rows sampled on demand on a window around the vehicle. Rows are
/// independent and stationary, so sampling each one only where the protocol
/// looks gives the same law as a full-width field.
struct LazyRows<'a> {
    params: FieldParams,
    layout: Layout,
    rng: &'a mut SimRng,
    row: ObstacleRow,
}

const LAZY_MARGIN: f64 = 1.0;

impl<'a> LazyRows<'a> {
    fn new(params: FieldParams, layout: Layout, rng: &'a mut SimRng) -> Self {
        let empty = Interval { lo: 0.0, hi: 1.0 };
        Self {
            params,
            layout,
            rng,
            row: ObstacleRow {
                ordinate: 0.0,
                slats: Vec::with_capacity(16),
                extent: empty,
            },
        }
    }
}

impl RowSource for LazyRows<'_> {
    fn ordinate(&self, k: usize) -> f64 {
        match &self.layout {
            Layout::Flat { spacing } => (k + 1) as f64 * spacing,
            Layout::Listed(ys) => ys[k],
        }
    }

    fn row(&mut self, k: usize, x: f64, reach: f64) -> &ObstacleRow {
        let extent = Interval::centered(x, reach + LAZY_MARGIN);
        self.row.ordinate = self.ordinate(k);
        self.row.extent = extent;
        sample_slats_into(&self.params, extent, self.rng, &mut self.row.slats);
        &self.row
    }
}

fn run_transit<S: RowSource>(
    src: &mut S,
    n_rows: usize,
    x_start: f64,
    y_start: f64,
    cfg: &ProtocolConfig,
    keep_path: bool,
) -> Result<TransitOutcome> {
    let mut x = x_start;
    let mut y = y_start;
    let mut heading = 0.0_f64;
    let mut out = TransitOutcome {
        rows_cleared: 0,
        collided: false,
        path: vec![(x, y)],
        headings: Vec::new(),
    };
    let tan_cr = cfg.theta_cr.tan();
    for k in 0..n_rows {
        let ordinate = src.ordinate(k);
        let gap = ordinate - y;
        if !(gap > 0.0) {
            return Err(invalid(format!("row {k} at {ordinate} is not ahead of y = {y}")));
        }
        let reach = gap * tan_cr + cfg.clearance;
        let row = src.row(k, x, reach);
        let arrival = x + gap * heading.tan();
        match decide(x, heading, row, gap, cfg, k)? {
            SteerDecision::Pass => {
                x = arrival;
            }
            SteerDecision::Steer {
                delta_theta,
                target_x,
            } => {
                heading += delta_theta;
                x = target_x;
            }
            SteerDecision::Collision => {
                out.collided = true;
                if keep_path {
                    out.path.push((arrival, ordinate));
                    out.headings.push(heading);
                }
                return Ok(out);
            }
        }
        y = ordinate;
        out.rows_cleared += 1;
        if keep_path {
            out.path.push((x, y));
            out.headings.push(heading);
        }
        if cfg.heading_mode == HeadingMode::ResetToAxis {
            heading = 0.0;
        }
    }
    Ok(out)
}

/// Flies the protocol through a materialized field, entering at `(x_start, 0)`.
pub fn transit(field: &ObstacleField, x_start: f64, cfg: &ProtocolConfig) -> Result<TransitOutcome> {
    cfg.validate()?;
    if field.rows.is_empty() {
        return Err(invalid("field has no rows"));
    }
    if !field.extent.contains(x_start) {
        return Err(Error::ExtentExhausted { row: 0, x: x_start });
    }
    run_transit(
        &mut MaterializedRows(field),
        field.n_rows(),
        x_start,
        0.0,
        cfg,
        true,
    )
}

/// Row placement used by the Monte Carlo drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RowLayout {
    #[default]
    Flat,
    /// Each row displaced by an exponential(gamma) draw; exploratory only.
    Jittered,
}

/// Width of the entry window the start abscissa is drawn from.
const ENTRY_SPAN: f64 = 1000.0;

fn trial_outcome(
    params: &FieldParams,
    n_rows: usize,
    cfg: &ProtocolConfig,
    layout: RowLayout,
    master_seed: u64,
    trial: u64,
) -> Result<TransitOutcome> {
    let mut rng = rng_for(master_seed, trial);
    let x_start = rng.random::<f64>() * ENTRY_SPAN;
    let layout = match layout {
        RowLayout::Flat => Layout::Flat {
            spacing: params.row_spacing(),
        },
        RowLayout::Jittered => {
            let mut p = *params;
            p.seed = substream(substream(master_seed, tags::ENTRY), trial);
            Layout::Listed(row_ordinates(&p, n_rows, true))
        }
    };
    let mut rows = LazyRows::new(*params, layout, &mut rng);
    run_transit(&mut rows, n_rows, x_start, 0.0, cfg, false)
}

/// Per-trial success indicator, a pure function of `(master_seed, trial)`.
pub fn trial_succeeds(
    params: &FieldParams,
    n_rows: usize,
    cfg: &ProtocolConfig,
    master_seed: u64,
    trial: u64,
) -> Result<bool> {
    Ok(!trial_outcome(params, n_rows, cfg, RowLayout::Flat, master_seed, trial)?.collided)
}

pub fn mc_collision_free(
    params: &FieldParams,
    n_rows: usize,
    cfg: &ProtocolConfig,
    trials: u64,
    master_seed: u64,
) -> Result<McSummary> {
    mc_collision_free_with(params, n_rows, cfg, trials, master_seed, RowLayout::Flat)
}

pub fn mc_collision_free_with(
    params: &FieldParams,
    n_rows: usize,
    cfg: &ProtocolConfig,
    trials: u64,
    master_seed: u64,
    layout: RowLayout,
) -> Result<McSummary> {
    params.validate()?;
    cfg.validate()?;
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let successes = (0..trials)
        .into_par_iter()
        .map(|i| {
            trial_outcome(params, n_rows, cfg, layout, master_seed, i).map(|o| u64::from(!o.collided))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(McSummary::new(trials, successes))
}

/// Rows crossed by straight (unsteered) transits, one entry per trial.
/// A trial that clears `max_rows` rows is reported as `max_rows`.
pub fn straight_free_paths(
    params: &FieldParams,
    trials: u64,
    master_seed: u64,
    max_rows: usize,
) -> Result<Vec<usize>> {
    params.validate()?;
    let cfg = ProtocolConfig::new(0.0)?;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            trial_outcome(params, max_rows, &cfg, RowLayout::Flat, master_seed, i)
                .map(|o| o.rows_cleared)
        })
        .collect()
}

/// Closed form for the nearest-edge protocol with heading reset: a blocking
/// slat is evaded when the nearer of its two exponential(alpha) residuals,
/// itself exponential(2 alpha), lies within reach.
pub fn nearest_edge_collision_free_prob(
    dist: &StationaryDistribution,
    steer: &SteeringModel,
    n: u64,
) -> Result<f64> {
    steer.validate()?;
    let doubled = SteeringModel::new(steer.theta_cr, 2.0 * steer.alpha_over_gamma)?;
    analytic::collision_free_prob(dist, &doubled, n)
}

/// Closed-form collision-free probability for `cfg`, when one exists.
pub fn protocol_collision_free_prob(
    params: &FieldParams,
    cfg: &ProtocolConfig,
    n: u64,
) -> Result<Option<f64>> {
    if cfg.heading_mode != HeadingMode::ResetToAxis {
        return Ok(None);
    }
    let dist = params.stationary()?;
    let tan = cfg.theta_cr.tan();
    let rate = match cfg.policy {
        EdgePolicy::Forward => params.alpha,
        EdgePolicy::Nearest => 2.0 * params.alpha,
    };
    if cfg.clearance == 0.0 {
        let steer = SteeringModel::new(cfg.theta_cr, rate / params.gamma)?;
        return analytic::collision_free_prob(&dist, &steer, n).map(Some);
    }
    let usable = (tan / params.gamma - cfg.clearance).max(0.0);
    let evade = -(-rate * usable).exp_m1();
    Ok(Some((dist.p1 + dist.p2 * evade).powf(n as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta_cr: f64,
    pub n_rows: usize,
    pub summary: McSummary,
    pub analytic: Option<f64>,
}

impl SweepPoint {
    pub fn within(&self, k: f64) -> Option<bool> {
        self.analytic.map(|p| self.summary.agrees_with(p, k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweep {
    pub points: Vec<SweepPoint>,
    /// First grid angle whose estimate exceeds 0.99.
    pub crossing_99: Option<f64>,
}

impl PhaseSweep {
    /// Last grid angle below `lo` and first above `hi`, if both exist.
    pub fn rise_window(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let first_high = self.points.iter().position(|p| p.summary.estimate > hi)?;
        let last_low = self.points[..first_high]
            .iter()
            .rposition(|p| p.summary.estimate < lo)?;
        Some((self.points[last_low].theta_cr, self.points[first_high].theta_cr))
    }

    /// Grid angles on either side of the first crossing of `level`.
    pub fn crossing_bracket(&self, level: f64) -> Option<(f64, f64)> {
        let above = self.points.iter().position(|p| p.summary.estimate > level)?;
        let below = above.checked_sub(1)?;
        Some((self.points[below].theta_cr, self.points[above].theta_cr))
    }
}

/// Monte Carlo estimate at every angle of `theta_grid`; grid point `i` uses
/// the substream `(seed, i)`.
pub fn mc_phase_sweep(
    params: &FieldParams,
    n_rows: usize,
    theta_grid: &[f64],
    trials_per_point: u64,
    seed: u64,
    template: &ProtocolConfig,
) -> Result<PhaseSweep> {
    if theta_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("theta grid must be sorted ascending"));
    }
    let mut points = Vec::with_capacity(theta_grid.len());
    for (i, &theta_cr) in theta_grid.iter().enumerate() {
        let cfg = ProtocolConfig {
            theta_cr,
            ..*template
        };
        let summary = mc_collision_free(params, n_rows, &cfg, trials_per_point, substream(seed, i as u64))?;
        points.push(SweepPoint {
            theta_cr,
            n_rows,
            summary,
            analytic: protocol_collision_free_prob(params, &cfg, n_rows as u64)?,
        });
    }
    let crossing_99 = points
        .iter()
        .find(|p| p.summary.estimate > 0.99)
        .map(|p| p.theta_cr);
    Ok(PhaseSweep {
        points,
        crossing_99,
    })
}
