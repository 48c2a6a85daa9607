use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::field::{ObstacleField, ObstacleRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionHit {
    pub t: f64,
    pub row: usize,
    pub x: f64,
    pub y: f64,
}

/// First contact parameter `s` in `[0, 1]` of the segment `p0 -> p1` with
/// the slats of `row`. Points outside the row extent never collide.
pub fn segment_hit(p0: (f64, f64), p1: (f64, f64), row: &ObstacleRow) -> Option<f64> {
    let y = row.ordinate;
    let (lo_y, hi_y) = if p0.1 <= p1.1 { (p0.1, p1.1) } else { (p1.1, p0.1) };
    if y < lo_y || y > hi_y {
        return None;
    }
    if p0.1 == p1.1 {
        // segment lies on the row line
        let dx = p1.0 - p0.0;
        let (a, b) = (p0.0.min(p1.0), p0.0.max(p1.0));
        let mut hits = row.slats.iter().filter(|slat| slat.lo <= b && slat.hi >= a);
        let contact = if dx >= 0.0 {
            hits.next()?.lo.max(p0.0)
        } else {
            hits.next_back()?.hi.min(p0.0)
        };
        return Some(if dx == 0.0 { 0.0 } else { (contact - p0.0) / dx });
    }
    let s = (y - p0.1) / (p1.1 - p0.1);
    let x = if s == 1.0 { p1.0 } else { p0.0 + s * (p1.0 - p0.0) };
    match row.occupancy(x) {
        Ok(true) => Some(s),
        _ => None,
    }
}

/// First collision of `traj` with `field`, in time order.
pub fn detect_collision(traj: &Trajectory, field: &ObstacleField) -> Option<CollisionHit> {
    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let p0 = (a.state.x, a.state.y);
        let p1 = (b.state.x, b.state.y);
        let (lo, hi) = if p0.1 <= p1.1 { (p0.1, p1.1) } else { (p1.1, p0.1) };
        let start = field.rows.partition_point(|r| r.ordinate < lo);
        let end = field.rows.partition_point(|r| r.ordinate <= hi);
        let mut best: Option<(f64, usize)> = None;
        for k in start..end {
            if let Some(s) = segment_hit(p0, p1, &field.rows[k]) {
                if best.is_none_or(|(bs, _)| s < bs) {
                    best = Some((s, k));
                }
            }
        }
        if let Some((s, row)) = best {
            return Some(CollisionHit {
                t: a.t + s * (b.t - a.t),
                row,
                x: p0.0 + s * (p1.0 - p0.0),
                y: p0.1 + s * (p1.1 - p0.1),
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldParams, Interval, Slat};

    fn row() -> ObstacleRow {
        ObstacleRow::new(
            5.0,
            Interval { lo: -10.0, hi: 10.0 },
            vec![Slat { lo: -3.0, hi: -1.0 }, Slat { lo: 1.0, hi: 2.0 }],
        )
        .unwrap()
    }

    #[test]
    fn crossing_cases() {
        let r = row();
        assert_eq!(segment_hit((0.0, 0.0), (0.0, 10.0), &r), None);
        assert_eq!(segment_hit((1.5, 0.0), (1.5, 10.0), &r), Some(0.5));
        // grazing an endpoint counts
        assert_eq!(segment_hit((1.0, 4.0), (1.0, 6.0), &r), Some(0.5));
        // ends exactly on the row line
        assert_eq!(segment_hit((2.0, 0.0), (2.0, 5.0), &r), Some(1.0));
        assert_eq!(segment_hit((0.0, 0.0), (0.0, 4.9), &r), None);
        // along the row line
        assert_eq!(segment_hit((0.0, 5.0), (3.0, 5.0), &r), Some(1.0 / 3.0));
        assert_eq!(segment_hit((0.0, 5.0), (-4.0, 5.0), &r), Some(0.25));
        assert_eq!(segment_hit((-0.5, 5.0), (0.5, 5.0), &r), None);
    }

    #[test]
    fn detect_first_hit_in_time() {
        use crate::control::{ControlInput, VehicleState};
        use crate::sim::{Phase, Sample};
        let e = Interval { lo: -10.0, hi: 10.0 };
        let f = ObstacleField::from_rows(
            FieldParams::reference(0),
            e,
            vec![
                ObstacleRow::new(5.0, e, vec![Slat { lo: 1.0, hi: 2.0 }]).unwrap(),
                ObstacleRow::new(15.0, e, vec![Slat { lo: -1.0, hi: 1.0 }]).unwrap(),
            ],
        )
        .unwrap();
        let sample = |t: f64, x: f64, y: f64| Sample {
            t,
            state: VehicleState::new(x, y, 0.0),
            input: ControlInput::default(),
            phase: Phase::Free,
            left: None,
            right: None,
        };
        let mut traj = Trajectory::default();
        traj.samples = vec![sample(0.0, 0.0, 0.0), sample(1.0, 0.0, 10.0), sample(2.0, 0.0, 20.0)];
        let hit = detect_collision(&traj, &f).unwrap();
        assert_eq!((hit.row, hit.t, hit.y), (1, 1.5, 15.0));
        traj.samples[2].state.x = 20.0;
        assert_eq!(detect_collision(&traj, &f), None);
    }
}
