//! Markovian obstacle fields.
//!
//! A row is a line partitioned into alternating closed obstacle slats and open
//! gaps whose widths are exponential with rates `alpha` (slats) and `beta`
//! (gaps). Rows are stacked at spacing `1/gamma` to form a field.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{rng_for, substream, tags, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl FieldParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, seed: u64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            gamma,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Reference obstacle field: alpha = 1, beta = gamma = 0.1.
    pub fn reference(seed: u64) -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be a positive finite rate, got {v}")));
            }
        }
        Ok(())
    }

    pub fn stationary(&self) -> Result<StationaryDistribution> {
        stationary_probs(self.alpha, self.beta)
    }

    pub fn row_spacing(&self) -> f64 {
        1.0 / self.gamma
    }

    pub fn alpha_over_gamma(&self) -> f64 {
        self.alpha / self.gamma
    }
}

/// Long-run probabilities of a point lying in open space (`p1`) or on a slat (`p2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub p1: f64,
    pub p2: f64,
}

impl StationaryDistribution {
    /// Builds the distribution from the open-space probability; `p2` is `1 - p1`.
    pub fn from_p1(p1: f64) -> Result<Self> {
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(invalid(format!("p1 must lie in (0, 1), got {p1}")));
        }
        Ok(Self { p1, p2: 1.0 - p1 })
    }
}

pub fn stationary_probs(alpha: f64, beta: f64) -> Result<StationaryDistribution> {
    if !(alpha.is_finite() && alpha > 0.0) || !(beta.is_finite() && beta > 0.0) {
        return Err(invalid(format!(
            "rates must be positive and finite (alpha = {alpha}, beta = {beta})"
        )));
    }
    let p1 = alpha / (alpha + beta);
    // p1 can round to 1.0 when beta/alpha is below machine epsilon.
    let p1 = p1.min(1.0 - f64::EPSILON / 2.0);
    Ok(StationaryDistribution { p1, p2: 1.0 - p1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(invalid(format!("interval [{lo}, {hi}] must be finite and nonempty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && s <= self.hi
    }

    pub fn centered(center: f64, half_width: f64) -> Self {
        Self {
            lo: center - half_width,
            hi: center + half_width,
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// A closed obstacle segment `[lo, hi]` along the row axis.
pub type Slat = Interval;

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleRow {
    pub ordinate: f64,
    pub slats: Vec<Slat>,
    pub extent: Interval,
}

impl ObstacleRow {
    /// Builds a row from explicit slats, checking ordering and clipping.
    pub fn new(ordinate: f64, extent: Interval, slats: Vec<Slat>) -> Result<Self> {
        if !ordinate.is_finite() {
            return Err(invalid("row ordinate must be finite"));
        }
        let mut prev_hi = f64::NEG_INFINITY;
        for s in &slats {
            if !(s.hi > s.lo) {
                return Err(invalid(format!("degenerate slat [{}, {}]", s.lo, s.hi)));
            }
            if s.lo <= prev_hi {
                return Err(invalid("slats must be strictly increasing and disjoint"));
            }
            if s.lo < extent.lo || s.hi > extent.hi {
                return Err(invalid(format!(
                    "slat [{}, {}] not clipped to extent [{}, {}]",
                    s.lo, s.hi, extent.lo, extent.hi
                )));
            }
            prev_hi = s.hi;
        }
        Ok(Self {
            ordinate,
            slats,
            extent,
        })
    }

    /// Index of the slat containing `s`, if any. Endpoints belong to the slat.
    pub fn slat_at(&self, s: f64) -> Result<Option<usize>> {
        if !self.extent.contains(s) {
            return Err(Error::OutOfExtent {
                s,
                lo: self.extent.lo,
                hi: self.extent.hi,
            });
        }
        Ok(self.slat_index(s))
    }

    pub(crate) fn slat_index(&self, s: f64) -> Option<usize> {
        // number of slats with lo <= s
        let k = self.slats.partition_point(|sl| sl.lo <= s);
        if k == 0 {
            return None;
        }
        (s <= self.slats[k - 1].hi).then_some(k - 1)
    }

    pub fn occupancy(&self, s: f64) -> Result<bool> {
        Ok(self.slat_at(s)?.is_some())
    }

    /// Total slat length inside the extent.
    pub fn occupied_length(&self) -> f64 {
        self.slats.iter().map(Interval::length).sum()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied_length() / self.extent.length()
    }

    /// Slats whose right end is not the clipped extent boundary.
    pub fn complete_slats(&self) -> impl Iterator<Item = &Slat> {
        let (lo, hi) = (self.extent.lo, self.extent.hi);
        self.slats.iter().filter(move |s| s.lo > lo && s.hi < hi)
    }

    /// Open gaps bounded by slats on both sides.
    pub fn interior_gaps(&self) -> impl Iterator<Item = Interval> + '_ {
        self.slats.windows(2).map(|w| Interval {
            lo: w[0].hi,
            hi: w[1].lo,
        })
    }
}

pub fn occupancy(row: &ObstacleRow, s: f64) -> Result<bool> {
    row.occupancy(s)
}

/// Sampled slats appended to `out` (cleared first). Shared by the field
/// builder and the Monte Carlo engines so that both draw the same law.
pub(crate) fn sample_slats_into(
    params: &FieldParams,
    extent: Interval,
    rng: &mut SimRng,
    out: &mut Vec<Slat>,
) {
    out.clear();
    let slat_width = Exp::new(params.alpha).expect("validated rate");
    let gap_width = Exp::new(params.beta).expect("validated rate");
    let p2 = params.beta / (params.alpha + params.beta);

    let push = |out: &mut Vec<Slat>, lo: f64, hi: f64| {
        let hi = hi.min(extent.hi);
        if hi <= lo {
            return;
        }
        match out.last_mut() {
            // a zero-width gap glues two slats together
            Some(last) if last.hi >= lo => last.hi = last.hi.max(hi),
            _ => out.push(Slat { lo, hi }),
        }
    };

    let mut s = extent.lo;
    // Stationary phase at the window edge; by memorylessness the residual
    // segment is again exponential with the segment's own rate.
    if rng.random::<f64>() < p2 {
        let w: f64 = slat_width.sample(rng);
        push(out, s, s + w);
        s += w;
    }
    while s < extent.hi {
        s += gap_width.sample(rng);
        if s >= extent.hi {
            break;
        }
        let w: f64 = slat_width.sample(rng);
        push(out, s, s + w);
        s += w;
    }
}

pub fn sample_row(
    params: &FieldParams,
    ordinate: f64,
    extent: Interval,
    rng: &mut SimRng,
) -> Result<ObstacleRow> {
    params.validate()?;
    Interval::new(extent.lo, extent.hi)?;
    let mut slats = Vec::new();
    sample_slats_into(params, extent, rng, &mut slats);
    Ok(ObstacleRow {
        ordinate,
        slats,
        extent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleField {
    pub params: FieldParams,
    pub extent: Interval,
    pub rows: Vec<ObstacleRow>,
}

/// Row ordinates for `n_rows` rows: `(k + 1) / gamma`, optionally displaced by
/// an exponential(gamma) draw per row, returned in ascending order.
pub fn row_ordinates(params: &FieldParams, n_rows: usize, jitter: bool) -> Vec<f64> {
    let spacing = params.row_spacing();
    let mut ys: Vec<f64> = (0..n_rows).map(|k| (k + 1) as f64 * spacing).collect();
    if jitter {
        let jitter_seed = substream(params.seed, tags::ROW_JITTER);
        let law = Exp::new(params.gamma).expect("validated rate");
        for (k, y) in ys.iter_mut().enumerate() {
            let mut rng = rng_for(jitter_seed, k as u64);
            *y += law.sample(&mut rng);
        }
        ys.sort_by(f64::total_cmp);
    }
    ys
}

pub fn sample_field(
    params: &FieldParams,
    n_rows: usize,
    extent: Interval,
    jitter: bool,
) -> Result<ObstacleField> {
    params.validate()?;
    if n_rows == 0 {
        return Err(invalid("n_rows must be at least 1"));
    }
    let extent = Interval::new(extent.lo, extent.hi)?;
    let rows = row_ordinates(params, n_rows, jitter)
        .into_iter()
        .enumerate()
        .map(|(k, ordinate)| {
            let mut rng = rng_for(params.seed, k as u64);
            let mut slats = Vec::new();
            sample_slats_into(params, extent, &mut rng, &mut slats);
            ObstacleRow {
                ordinate,
                slats,
                extent,
            }
        })
        .collect();
    Ok(ObstacleField {
        params: *params,
        extent,
        rows,
    })
}

#[derive(Serialize, Deserialize)]
struct RowDoc {
    ordinate: f64,
    slats: Vec<Slat>,
}

#[derive(Serialize, Deserialize)]
struct FieldDoc {
    alpha: f64,
    beta: f64,
    gamma: f64,
    seed: u64,
    extent: Interval,
    rows: Vec<RowDoc>,
}

impl ObstacleField {
    /// Builds a field from explicit rows (e.g. hand-made test geometry).
    pub fn from_rows(params: FieldParams, extent: Interval, rows: Vec<ObstacleRow>) -> Result<Self> {
        params.validate()?;
        let extent = Interval::new(extent.lo, extent.hi)?;
        for w in rows.windows(2) {
            if w[1].ordinate <= w[0].ordinate {
                return Err(invalid("row ordinates must be strictly increasing"));
            }
        }
        let rows = rows
            .into_iter()
            .map(|r| ObstacleRow::new(r.ordinate, extent, r.slats))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            extent,
            rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Index of the first row strictly above `y`.
    pub fn next_row_above(&self, y: f64) -> Option<usize> {
        let k = self.rows.partition_point(|r| r.ordinate <= y);
        (k < self.rows.len()).then_some(k)
    }

    pub fn to_json(&self) -> String {
        let doc = FieldDoc {
            alpha: self.params.alpha,
            beta: self.params.beta,
            gamma: self.params.gamma,
            seed: self.params.seed,
            extent: self.extent,
            rows: self
                .rows
                .iter()
                .map(|r| RowDoc {
                    ordinate: r.ordinate,
                    slats: r.slats.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("field documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FieldDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let params = FieldParams::new(doc.alpha, doc.beta, doc.gamma, doc.seed)?;
        let rows = doc
            .rows
            .into_iter()
            .map(|r| ObstacleRow {
                ordinate: r.ordinate,
                slats: r.slats,
                extent: doc.extent,
            })
            .collect();
        Self::from_rows(params, doc.extent, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(slats: &[(f64, f64)]) -> ObstacleRow {
        ObstacleRow::new(
            10.0,
            Interval { lo: 0.0, hi: 10.0 },
            slats.iter().map(|&(lo, hi)| Slat { lo, hi }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn stationary_reference_values() {
        let d = stationary_probs(1.0, 0.1).unwrap();
        assert!((d.p1 - 0.909_090_909_09).abs() < 1e-10);
        assert!((d.p2 - 0.090_909_090_91).abs() < 1e-10);
        assert!((d.p1 / d.p2 - 10.0).abs() < 1e-9);
        assert_eq!(d.p1 + d.p2, 1.0);

        let d = stationary_probs(0.7, 0.7).unwrap();
        assert_eq!((d.p1, d.p2), (0.5, 0.5));
        let d = stationary_probs(2.0, 0.5).unwrap();
        assert!((d.p1 - 0.8).abs() < 1e-15 && (d.p2 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn stationary_rejects_bad_rates() {
        assert!(matches!(stationary_probs(0.0, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(stationary_probs(1.0, -2.0), Err(Error::InvalidParameter(_))));
        assert!(stationary_probs(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn occupancy_closed_slats() {
        let r = row(&[(2.0, 3.0)]);
        assert!(r.occupancy(2.5).unwrap());
        assert!(r.occupancy(3.0).unwrap());
        assert!(r.occupancy(2.0).unwrap());
        assert!(!r.occupancy(3.0 + 1e-12).unwrap());
        assert!(!r.occupancy(0.0).unwrap());
        assert!(matches!(r.occupancy(10.5), Err(Error::OutOfExtent { .. })));
    }

    #[test]
    fn row_constructor_rejects_overlap() {
        let e = Interval { lo: 0.0, hi: 10.0 };
        let bad = vec![Slat { lo: 1.0, hi: 2.0 }, Slat { lo: 2.0, hi: 3.0 }];
        assert!(ObstacleRow::new(1.0, e, bad).is_err());
        let unclipped = vec![Slat { lo: 9.0, hi: 11.0 }];
        assert!(ObstacleRow::new(1.0, e, unclipped).is_err());
    }

    #[test]
    fn sampled_rows_are_deterministic_and_ordered() {
        let p = FieldParams::reference(42);
        let e = Interval { lo: -500.0, hi: 500.0 };
        let a = sample_row(&p, 10.0, e, &mut rng_for(42, 0)).unwrap();
        let b = sample_row(&p, 10.0, e, &mut rng_for(42, 0)).unwrap();
        assert_eq!(a, b);
        assert!(ObstacleRow::new(a.ordinate, e, a.slats.clone()).is_ok());
    }

    #[test]
    fn dense_gaps_limit_gives_full_occupancy() {
        let p = FieldParams::new(1.0, 1e6, 0.1, 3).unwrap();
        let e = Interval { lo: 0.0, hi: 1000.0 };
        let r = sample_row(&p, 1.0, e, &mut rng_for(3, 0)).unwrap();
        assert!(r.occupied_fraction() > 0.9999, "{}", r.occupied_fraction());
    }

    #[test]
    fn uniform_ordinates_without_jitter() {
        let p = FieldParams::reference(1);
        let f = sample_field(&p, 10, Interval { lo: 0.0, hi: 100.0 }, false).unwrap();
        let ys: Vec<f64> = f.rows.iter().map(|r| r.ordinate).collect();
        let expected: Vec<f64> = (1..=10).map(|k| k as f64 * 10.0).collect();
        for (y, e) in ys.iter().zip(&expected) {
            assert!((y - e).abs() < 1e-12);
        }
        assert!(sample_field(&p, 0, Interval { lo: 0.0, hi: 1.0 }, false).is_err());
    }

    #[test]
    fn single_row_field() {
        let p = FieldParams::reference(5);
        let e = Interval { lo: 0.0, hi: 50.0 };
        let f = sample_field(&p, 1, e, false).unwrap();
        assert_eq!(f.n_rows(), 1);
        let direct = sample_row(&p, 10.0, e, &mut rng_for(5, 0)).unwrap();
        assert_eq!(f.rows[0], direct);
    }

    #[test]
    fn next_row_lookup() {
        let p = FieldParams::reference(1);
        let f = sample_field(&p, 3, Interval { lo: 0.0, hi: 10.0 }, false).unwrap();
        assert_eq!(f.next_row_above(0.0), Some(0));
        assert_eq!(f.next_row_above(10.0), Some(1));
        assert_eq!(f.next_row_above(29.0), Some(2));
        assert_eq!(f.next_row_above(30.0), None);
    }

    #[test]
    fn json_shape_and_round_trip() {
        let p = FieldParams::reference(9);
        let f = sample_field(&p, 3, Interval { lo: -20.0, hi: 20.0 }, true).unwrap();
        let text = f.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["alpha", "beta", "gamma", "seed", "extent", "rows"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["rows"][0]["slats"][0].is_array());
        let back = ObstacleField::from_json(&text).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn json_rejects_invalid_rows() {
        let text = r#"{"alpha":1,"beta":0.1,"gamma":0.1,"seed":1,"extent":[0,10],
            "rows":[{"ordinate":10,"slats":[[3,2]]}]}"#;
        assert!(ObstacleField::from_json(text).is_err());
        assert!(matches!(ObstacleField::from_json("{"), Err(Error::Format(_))));
    }
}
