//! Queue assignment of individual scores under deployed cuts.

use serde::{Deserialize, Serialize};

use crate::capacity::{DensityView, DeployedCuts};
use crate::error::{check_unit, Result};

/// Queues in priority order, highest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueLabel {
    Escalation,
    Standard,
    Hibernation,
}

impl QueueLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            QueueLabel::Escalation => "escalation",
            QueueLabel::Standard => "standard",
            QueueLabel::Hibernation => "hibernation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub score: f64,
    pub queue: QueueLabel,
    /// Reviewed this interval; false below the trim point or once the queue's
    /// capacity is used up.
    pub taken: bool,
    pub interval_id: u64,
}

/// Scores at or above the escalation cut escalate; scores at or above the
/// standard cut (when present) are Standard; the rest hibernate.
pub fn route(score: f64, cuts: &DeployedCuts) -> Result<QueueLabel> {
    check_unit(score)?;
    Ok(route_unchecked(score, cuts))
}

#[inline]
fn route_unchecked(score: f64, cuts: &DeployedCuts) -> QueueLabel {
    if score >= cuts.escalation_cut() {
        QueueLabel::Escalation
    } else if cuts.standard_cut().is_some_and(|c| score >= c) {
        QueueLabel::Standard
    } else {
        QueueLabel::Hibernation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueCounts {
    pub escalation: f64,
    pub standard: f64,
    pub hibernation: f64,
}

/// Expected volume per queue from the density's tail masses.
pub fn expected_counts(view: &DensityView, cuts: &DeployedCuts, n: f64) -> QueueCounts {
    let total = view.total();
    let u_up = view.tail_mass(cuts.escalation_cut());
    let u_std = cuts.standard_cut().map_or(u_up, |c| view.tail_mass(c));
    QueueCounts {
        escalation: n * u_up,
        standard: n * (u_std - u_up),
        hibernation: n * (total - u_std),
    }
}

/// Stable descending sort by score; equal scores keep arrival order.
pub fn within_queue_order(decisions: &[RoutingDecision]) -> Vec<RoutingDecision> {
    let mut out = decisions.to_vec();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// Routes one interval's arrivals, taking cases above each queue's trim point
/// until that queue's capacity is used.
#[derive(Debug, Clone)]
pub struct IntervalRouter {
    cuts: DeployedCuts,
    capacity_up: f64,
    capacity_std: f64,
    interval_id: u64,
    taken_up: u64,
    taken_std: u64,
}

impl IntervalRouter {
    pub fn new(cuts: DeployedCuts, capacity_up: f64, capacity_std: f64, interval_id: u64) -> Self {
        IntervalRouter {
            cuts,
            capacity_up,
            capacity_std,
            interval_id,
            taken_up: 0,
            taken_std: 0,
        }
    }

    pub fn cuts(&self) -> &DeployedCuts {
        &self.cuts
    }

    pub fn decide(&mut self, score: f64) -> Result<RoutingDecision> {
        check_unit(score)?;
        let queue = route_unchecked(score, &self.cuts);
        let taken = match queue {
            QueueLabel::Escalation => {
                let ok = score >= self.cuts.escalation_trim() && (self.taken_up as f64) < self.capacity_up;
                self.taken_up += ok as u64;
                ok
            }
            QueueLabel::Standard => {
                let trim = self.cuts.standard_trim().unwrap_or(f64::INFINITY);
                let ok = score >= trim && (self.taken_std as f64) < self.capacity_std;
                self.taken_std += ok as u64;
                ok
            }
            QueueLabel::Hibernation => false,
        };
        Ok(RoutingDecision {
            score,
            queue,
            taken,
            interval_id: self.interval_id,
        })
    }

    /// Cases taken into Escalation and Standard so far.
    pub fn taken(&self) -> (u64, u64) {
        (self.taken_up, self.taken_std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Grid;
    use proptest::prelude::*;

    fn pair() -> DeployedCuts {
        DeployedCuts::pair(0.5, 0.8, 0.5, 0.8)
    }

    #[test]
    fn routing_rule() {
        assert_eq!(route(0.9, &pair()).unwrap(), QueueLabel::Escalation);
        assert_eq!(route(0.6, &pair()).unwrap(), QueueLabel::Standard);
        assert_eq!(route(0.5, &pair()).unwrap(), QueueLabel::Standard);
        assert_eq!(route(0.8, &pair()).unwrap(), QueueLabel::Escalation);
        assert_eq!(route(0.1, &pair()).unwrap(), QueueLabel::Hibernation);
        let single = DeployedCuts::single(0.7, 0.7);
        assert_eq!(route(0.6, &single).unwrap(), QueueLabel::Hibernation);
        assert_eq!(route(0.7, &single).unwrap(), QueueLabel::Escalation);
        assert!(route(1.1, &single).is_err());
    }

    #[test]
    fn expected_count_examples() {
        let g = Grid::new(512).unwrap();
        let u = vec![1.0; 512];
        let v = DensityView::new(&g, &u);
        let c = expected_counts(&v, &pair(), 1000.0);
        assert!((c.escalation - 200.0).abs() < 1e-9);
        assert!((c.standard - 300.0).abs() < 1e-9);
        assert!((c.hibernation - 500.0).abs() < 1e-9);
        let c = expected_counts(&v, &DeployedCuts::single(0.95, 0.95), 1000.0);
        assert!((c.escalation - 50.0).abs() < 1e-9);
        assert_eq!(c.standard, 0.0);
    }

    #[test]
    fn ordering_examples() {
        let d = |s| RoutingDecision {
            score: s,
            queue: QueueLabel::Escalation,
            taken: true,
            interval_id: 0,
        };
        let out = within_queue_order(&[d(0.81), d(0.99), d(0.86)]);
        let s: Vec<f64> = out.iter().map(|r| r.score).collect();
        assert_eq!(s, vec![0.99, 0.86, 0.81]);
        let mut a = d(0.5);
        a.interval_id = 1;
        let mut b = d(0.5);
        b.interval_id = 2;
        let out = within_queue_order(&[a, b]);
        assert_eq!((out[0].interval_id, out[1].interval_id), (1, 2));
        assert!(within_queue_order(&[]).is_empty());
    }

    #[test]
    fn router_caps_intake_and_respects_trim() {
        let cuts = DeployedCuts::pair(0.5, 0.8, 0.6, 0.9);
        let mut r = IntervalRouter::new(cuts, 2.0, 1.0, 7);
        let taken: Vec<bool> = [0.95, 0.85, 0.99, 0.97, 0.55, 0.65, 0.7]
            .iter()
            .map(|&s| r.decide(s).unwrap().taken)
            .collect();
        assert_eq!(taken, vec![true, false, true, false, false, true, false]);
        assert_eq!(r.taken(), (2, 1));
    }

    proptest! {
        #[test]
        fn routing_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0,
                               c1 in 0.05f64..0.5, gap in 0.01f64..0.45) {
            let cuts = DeployedCuts::pair(c1, c1 + gap, c1, c1 + gap);
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            prop_assert!(route(hi, &cuts).unwrap() <= route(lo, &cuts).unwrap());
        }

        #[test]
        fn trim_changes_only_taken_flags(s in 0.0f64..=1.0, t1 in 0.8f64..1.0, t2 in 0.8f64..1.0) {
            let mut r1 = IntervalRouter::new(DeployedCuts::single(0.8, t1), 10.0, 0.0, 0);
            let mut r2 = IntervalRouter::new(DeployedCuts::single(0.8, t2), 10.0, 0.0, 0);
            prop_assert_eq!(r1.decide(s).unwrap().queue, r2.decide(s).unwrap().queue);
        }

        #[test]
        fn expected_counts_sum_to_n(c1 in 0.05f64..0.5, gap in 0.01f64..0.45, n in 1.0f64..1e6,
                                    shape in 0.0f64..0.9) {
            let g = Grid::new(256).unwrap();
            let f: Vec<f64> = g.points().map(|x| 1.0 + shape * (6.0 * x).cos()).collect();
            let m = g.integrate(&f);
            let f: Vec<f64> = f.iter().map(|v| v / m).collect();
            let v = DensityView::new(&g, &f);
            let c = expected_counts(&v, &DeployedCuts::pair(c1, c1 + gap, c1, c1 + gap), n);
            prop_assert!((c.escalation + c.standard + c.hibernation - n).abs() <= 1e-6 * n);
        }
    }
}
