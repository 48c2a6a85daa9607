//! Pinhole projection onto the body-frame image axis and time-to-contact /
//! time-to-transit estimation from sampled image coordinates.
//!
//! The image plane sits one unit ahead of the vehicle along its heading. A
//! feature "transits" when its along-heading distance drops to that unit.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::VehicleState;
use crate::error::{invalid, Error, Result};
use crate::rng::{substream, SimRng};

/// Denominators closer to zero than this are treated as singular.
pub const SINGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachScenario {
    /// Object diameter.
    pub d_obj: f64,
    /// Focal length.
    pub f: f64,
    pub x0: f64,
    /// Closing speed.
    pub v: f64,
}

impl ApproachScenario {
    pub fn new(d_obj: f64, f: f64, x0: f64, v: f64) -> Result<Self> {
        let s = Self { d_obj, f, x0, v };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("d_obj", self.d_obj), ("f", self.f), ("x0", self.x0), ("v", self.v)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    pub fn distance_at(&self, t: f64) -> f64 {
        self.x0 - self.v * t
    }

    pub fn size_at(&self, t: f64) -> Result<f64> {
        image_size(self, self.distance_at(t))
    }

    /// Image sizes at `t = k dt` for `k` in `0..n`.
    pub fn size_series(&self, dt: f64, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|k| self.size_at(k as f64 * dt)).collect()
    }
}

/// Apparent size `f d_obj / x` of an object at distance `x`.
pub fn image_size(scn: &ApproachScenario, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::BehindCamera { x });
    }
    Ok(scn.f * scn.d_obj / x)
}

pub type FeatureId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub id: FeatureId,
    pub x: f64,
    pub y: f64,
}

impl FeaturePoint {
    pub fn new(id: FeatureId, x: f64, y: f64) -> Self {
        Self { id, x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureProjection {
    pub id: FeatureId,
    /// Signed image coordinate, positive to the right of the heading.
    pub d_img: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub id: FeatureId,
    /// Negative once the transit line is behind the vehicle.
    pub tau: f64,
    pub t: f64,
}

/// Along-heading and leftward offsets of `feat` in the body frame.
pub fn body_offsets(state: &VehicleState, feat: &FeaturePoint) -> (f64, f64) {
    let (s, c) = state.theta.sin_cos();
    let dx = feat.x - state.x;
    let dy = feat.y - state.y;
    (c * dx + s * dy, -s * dx + c * dy)
}

/// Image coordinate of `feat` seen from `state` at time `t`. The general
/// focal length scales the numerator only.
pub fn project(state: &VehicleState, feat: &FeaturePoint, f: f64, t: f64) -> Result<FeatureProjection> {
    let (along, left) = body_offsets(state, feat);
    let denominator = 1.0 - along;
    if denominator.abs() <= SINGULARITY_TOL {
        return Err(Error::ProjectionSingularity { denominator });
    }
    Ok(FeatureProjection {
        id: feat.id,
        d_img: f * left / denominator,
        t,
    })
}

/// Time to transit under frozen heading and constant speed `v`.
pub fn tau_analytic(state: &VehicleState, feat: &FeaturePoint, v: f64, t: f64) -> Result<TauEstimate> {
    if !(v > 0.0) {
        return Err(invalid(format!("speed must be positive, got {v}")));
    }
    let (along, _) = body_offsets(state, feat);
    Ok(TauEstimate {
        id: feat.id,
        tau: (along - 1.0) / v,
        t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffConfig {
    /// Stride, in samples, of the three-point difference stencil.
    pub half_window: usize,
    /// Smallest image derivative magnitude that still yields a tau.
    pub floor: f64,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            half_window: 1,
            floor: 1e-12,
        }
    }
}

impl DiffConfig {
    pub fn with_half_window(half_window: usize) -> Self {
        Self {
            half_window,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.half_window == 0 {
            return Err(invalid("half_window must be at least 1"));
        }
        if !(self.floor >= 0.0) {
            return Err(invalid("derivative floor must be non-negative"));
        }
        Ok(())
    }

    fn needed(&self) -> usize {
        2 * self.half_window + 1
    }
}

/// Derivative at `at` of the parabola through three samples.
fn lagrange_derivative(t: [f64; 3], y: [f64; 3], at: f64) -> f64 {
    let [t0, t1, t2] = t;
    let [y0, y1, y2] = y;
    y0 * ((at - t1) + (at - t2)) / ((t0 - t1) * (t0 - t2))
        + y1 * ((at - t0) + (at - t2)) / ((t1 - t0) * (t1 - t2))
        + y2 * ((at - t0) + (at - t1)) / ((t2 - t0) * (t2 - t1))
}

/// Derivative at sample `i`: centered where the stencil fits, one-sided
/// second order at the ends.
fn derivative_at(times: &[f64], values: &[f64], i: usize, h: usize) -> f64 {
    let n = values.len();
    let (a, b, c) = if i >= h && i + h < n {
        // symmetric form is exactly antisymmetric under time reversal
        if is_uniform(times[i - h], times[i], times[i + h]) {
            return (values[i + h] - values[i - h]) / (times[i + h] - times[i - h]);
        }
        (i - h, i, i + h)
    } else if i < h {
        (i, i + h, i + 2 * h)
    } else {
        (i - 2 * h, i - h, i)
    };
    lagrange_derivative(
        [times[a], times[b], times[c]],
        [values[a], values[b], values[c]],
        times[i],
    )
}

fn is_uniform(t0: f64, t1: f64, t2: f64) -> bool {
    ((t1 - t0) - (t2 - t1)).abs() <= 1e-9 * (t2 - t0).abs()
}

fn ratio(value: f64, derivative: f64, floor: f64) -> Result<f64> {
    if !(derivative.abs() > floor) {
        return Err(Error::UndefinedTau { derivative, floor });
    }
    Ok(value / derivative)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("sample times must be strictly increasing"));
    }
    Ok(())
}

/// `d / d'` at every sample of a uniformly sampled image-size series starting at `t = 0`.
pub fn time_to_contact(d_series: &[f64], dt: f64, cfg: &DiffConfig) -> Result<Vec<TauEstimate>> {
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    if d_series.len() < cfg.needed() {
        return Err(Error::InsufficientSamples {
            needed: cfg.needed(),
            got: d_series.len(),
        });
    }
    let times: Vec<f64> = (0..d_series.len()).map(|k| k as f64 * dt).collect();
    ratio_series(&times, d_series, cfg, 0)
}

fn ratio_series(times: &[f64], values: &[f64], cfg: &DiffConfig, id: FeatureId) -> Result<Vec<TauEstimate>> {
    (0..values.len())
        .map(|i| {
            let d = derivative_at(times, values, i, cfg.half_window);
            Ok(TauEstimate {
                id,
                tau: ratio(values[i], d, cfg.floor)?,
                t: times[i],
            })
        })
        .collect()
}

fn track_columns(track: &[FeatureProjection], cfg: &DiffConfig) -> Result<(FeatureId, Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    if track.len() < cfg.needed() {
        return Err(Error::InsufficientSamples {
            needed: cfg.needed(),
            got: track.len(),
        });
    }
    let id = track[0].id;
    if track.iter().any(|p| p.id != id) {
        return Err(invalid("track mixes feature ids"));
    }
    let times: Vec<f64> = track.iter().map(|p| p.t).collect();
    check_times(&times)?;
    Ok((id, times, track.iter().map(|p| p.d_img).collect()))
}

/// Time-to-transit at every sample of a feature track.
pub fn tau_series(track: &[FeatureProjection], cfg: &DiffConfig) -> Result<Vec<TauEstimate>> {
    let (id, times, values) = track_columns(track, cfg)?;
    ratio_series(&times, &values, cfg, id)
}

/// Causal time-to-transit at the newest sample of `track`. The ratio is
/// formed with a centered difference `half_window` samples back and counted
/// down to the newest sample time.
pub fn tau_from_track(track: &[FeatureProjection], cfg: &DiffConfig) -> Result<TauEstimate> {
    let h = cfg.half_window;
    let tail = &track[track.len().saturating_sub(2 * h + 1)..];
    let (id, times, values) = track_columns(tail, cfg)?;
    let now = times[2 * h];
    let d = if is_uniform(times[0], times[h], now) {
        (values[2 * h] - values[0]) / (now - times[0])
    } else {
        lagrange_derivative(
            [times[0], times[h], now],
            [values[0], values[h], values[2 * h]],
            times[h],
        )
    };
    let tau_mid = ratio(values[h], d, cfg.floor)?;
    Ok(TauEstimate {
        id,
        tau: tau_mid - (now - times[h]),
        t: now,
    })
}

/// Parameters for the noisy feature-cluster study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStudy {
    pub n_features: usize,
    /// Noise standard deviation as a fraction of each image coordinate.
    pub sigma_rel: f64,
    pub dt: f64,
    pub half_windows: Vec<usize>,
    pub draws: usize,
    pub seed: u64,
}

impl Default for ClusterStudy {
    fn default() -> Self {
        Self {
            n_features: 20,
            sigma_rel: 0.005,
            dt: 1e-2,
            half_windows: vec![10, 30, 90],
            draws: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpread {
    pub half_window: usize,
    /// Mean over noise draws of the across-cluster std of tau over its mean.
    pub rel_std: f64,
    pub mean_tau: f64,
    pub true_tau: f64,
}

/// A vehicle flies straight at unit speed toward a cluster of features that
/// share one along-track distance but differ in lateral offset. Each feature
/// track is corrupted by multiplicative Gaussian noise and tau is estimated
/// at a common instant; the spread of the cluster's estimates is reported
/// for each differencing window.
pub fn cluster_tau_spread(study: &ClusterStudy) -> Result<Vec<ClusterSpread>> {
    if study.n_features < 2 || study.draws == 0 {
        return Err(invalid("cluster study needs at least two features and one draw"));
    }
    if !(study.dt > 0.0 && study.sigma_rel >= 0.0) {
        return Err(invalid("cluster study needs dt > 0 and sigma_rel >= 0"));
    }
    let h_max = *study.half_windows.iter().max().ok_or_else(|| invalid("no windows"))?;
    let along0 = 6.0;
    let t_est = 2.0;
    let true_tau = along0 - t_est - 1.0;
    if h_max as f64 * study.dt >= 0.5 * true_tau {
        return Err(invalid("widest window reaches too close to the transit line"));
    }
    let n_samples = 2 * h_max + 1;
    let times: Vec<f64> = (0..n_samples)
        .map(|k| t_est + (k as f64 - h_max as f64) * study.dt)
        .collect();
    let features: Vec<FeaturePoint> = (0..study.n_features)
        .map(|i| {
            let u = i as f64 / (study.n_features - 1) as f64;
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            FeaturePoint::new(i as FeatureId, along0, side * (0.2 + 0.8 * u))
        })
        .collect();
    let clean: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            times
                .iter()
                .map(|&t| Ok(project(&VehicleState::new(t, 0.0, 0.0), f, 1.0, t)?.d_img))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let mut out = Vec::with_capacity(study.half_windows.len());
    for (w, &h) in study.half_windows.iter().enumerate() {
        if h == 0 {
            return Err(invalid("half_window must be at least 1"));
        }
        let mut rel_sum = 0.0;
        let mut mean_sum = 0.0;
        for draw in 0..study.draws {
            let mut rng = SimRng::seed_from_u64(substream(substream(study.seed, w as u64), draw as u64));
            let taus = clean
                .iter()
                .map(|series| {
                    let noisy: Vec<f64> = series
                        .iter()
                        .map(|&d| d * (1.0 + study.sigma_rel * noise.sample(&mut rng)))
                        .collect();
                    let m = h_max;
                    let deriv = (noisy[m + h] - noisy[m - h]) / (times[m + h] - times[m - h]);
                    ratio(noisy[m], deriv, 0.0)
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = taus.len() as f64;
            let mean = taus.iter().sum::<f64>() / n;
            let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            rel_sum += var.sqrt() / mean.abs();
            mean_sum += mean;
        }
        out.push(ClusterSpread {
            half_window: h,
            rel_std: rel_sum / study.draws as f64,
            mean_tau: mean_sum / study.draws as f64,
            true_tau,
        });
    }
    Ok(out)
}
