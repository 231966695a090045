//! Reference thresholding policies to compare against.

use serde::{Deserialize, Serialize};

/// Cut admitting exactly the `c` largest scores (ties at the cut included).
/// `c = 0` returns a cut just above the maximum; `c ≥ len` the minimum.
pub fn batch_topk(scores: &[f64], c: usize) -> f64 {
    if scores.is_empty() {
        return 1.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if c == 0 {
        return sorted[0].next_up();
    }
    sorted[c.min(sorted.len()) - 1]
}

/// Proportional controller on intake error:
/// `cut ← cut + γ (A - C) / (N · max(f̂(cut), ε))`, each move clamped to
/// `±max_step`. Without the clamp a near-empty histogram bin at the cut
/// sends the cut across the whole domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwmaController {
    pub gamma: f64,
    pub floor: f64,
    pub max_step: f64,
}

impl Default for EwmaController {
    fn default() -> Self {
        EwmaController {
            gamma: 0.5,
            floor: 0.05,
            max_step: 0.02,
        }
    }
}

impl EwmaController {
    pub fn step(&self, cut: f64, intake: f64, capacity: f64, n: f64, density_at_cut: f64) -> f64 {
        if n <= 0.0 {
            return cut;
        }
        let gain = n * density_at_cut.max(self.floor);
        let step = (self.gamma * (intake - capacity) / gain).clamp(-self.max_step, self.max_step);
        (cut + step).clamp(0.0, 1.0)
    }
}

/// Histogram estimate of the density at `x` from one interval's scores.
pub fn local_density(scores: &[f64], x: f64, half_width: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let lo = (x - half_width).max(0.0);
    let hi = (x + half_width).min(1.0);
    let k = scores.iter().filter(|&&s| s >= lo && s <= hi).count();
    k as f64 / (scores.len() as f64 * (hi - lo).max(f64::EPSILON))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_examples() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(batch_topk(&xs, 3), 0.8);
        assert_eq!(batch_topk(&xs, 10), 0.1);
        assert_eq!(batch_topk(&xs, 20), 0.1);
        let above = batch_topk(&xs, 0);
        assert!(above > 1.0 && xs.iter().all(|&x| x < above));
    }

    #[test]
    fn ewma_fixed_point_and_direction() {
        let c = EwmaController::default();
        assert_eq!(c.step(0.8, 50.0, 50.0, 1000.0, 0.5), 0.8);
        assert!(c.step(0.8, 70.0, 50.0, 1000.0, 0.5) > 0.8);
        assert!(c.step(0.8, 30.0, 50.0, 1000.0, 0.5) < 0.8);
    }

    #[test]
    fn ewma_step_is_bounded() {
        let c = EwmaController::default();
        assert_eq!(c.step(0.5, 1000.0, 50.0, 1000.0, 0.0), 0.5 + c.max_step);
    }

    #[test]
    fn histogram_density_of_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((local_density(&xs, 0.5, 0.05) - 1.0).abs() < 0.02);
    }
}
