use serde::{Deserialize, Serialize};

use super::grid::Grid;

/// Floor applied to pilot values before logs and square-root ratios.
pub const DEFAULT_PILOT_FLOOR: f64 = 1e-4;

/// Per-grid-point bandwidths `h(x_j)` around a global scale `h0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthProfile {
    pub h0: f64,
    pub per_point: Vec<f64>,
    pub h_min: f64,
    pub h_max: f64,
    /// Geometric mean of the pilot the profile was built from (1 for flat profiles).
    pub geo_mean: f64,
    widest: f64,
}

impl BandwidthProfile {
    /// Flat profile `h(x) ≡ clip(h0)`.
    pub fn uniform(grid: &Grid, h0: f64, h_min: f64, h_max: f64) -> Self {
        let lo = effective_floor(grid, h_min);
        let h = h0.clamp(lo, h_max.max(lo));
        BandwidthProfile {
            h0,
            per_point: vec![h; grid.len()],
            h_min,
            h_max,
            geo_mean: 1.0,
            widest: h,
        }
    }

    /// Abramson square-root law: `h(x) = h0 * sqrt(g / f̃(x))`, clipped to
    /// `[h_min, h_max]`, with `f̃` floored at `floor`.
    pub fn abramson(grid: &Grid, pilot: &[f64], h0: f64, h_min: f64, h_max: f64, floor: f64) -> Self {
        let g = geometric_mean(grid, pilot, floor);
        let lo = effective_floor(grid, h_min);
        let hi = h_max.max(lo);
        let per_point: Vec<f64> = pilot
            .iter()
            .map(|&p| (h0 * (g / p.max(floor)).sqrt()).clamp(lo, hi))
            .collect();
        let widest = per_point.iter().cloned().fold(0.0, f64::max);
        BandwidthProfile {
            h0,
            per_point,
            h_min,
            h_max,
            geo_mean: g,
            widest,
        }
    }

    /// Same profile with every bandwidth multiplied by `factor` (no clipping).
    pub fn scaled(&self, factor: f64) -> Self {
        let per_point: Vec<f64> = self.per_point.iter().map(|h| h * factor).collect();
        BandwidthProfile {
            h0: self.h0 * factor,
            widest: self.widest * factor,
            per_point,
            ..*self
        }
    }

    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        self.per_point[j]
    }

    /// Largest bandwidth in the profile; bounds the stencil footprint.
    #[inline]
    pub fn widest(&self) -> f64 {
        self.widest
    }
}

/// Bandwidths below two grid spacings leave too few support points for the
/// discrete stencil; the lower clip is raised accordingly on coarse grids.
fn effective_floor(grid: &Grid, h_min: f64) -> f64 {
    h_min.max(2.0 * grid.spacing())
}

/// `exp(∫₀¹ log max(f̃, floor))` by the trapezoid rule.
pub fn geometric_mean(grid: &Grid, pilot: &[f64], floor: f64) -> f64 {
    let logs: Vec<f64> = pilot.iter().map(|&p| p.max(floor).ln()).collect();
    grid.integrate(&logs).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(256).unwrap()
    }

    #[test]
    fn geometric_mean_examples() {
        let g = grid();
        assert!((geometric_mean(&g, &vec![1.0; 256], 1e-4) - 1.0).abs() < 1e-12);
        assert!((geometric_mean(&g, &vec![2.0; 256], 1e-4) - 2.0).abs() < 1e-12);
        assert!((geometric_mean(&g, &vec![0.0; 256], 1e-4) - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn abramson_flat_pilot_gives_flat_profile() {
        let g = grid();
        let p = BandwidthProfile::abramson(&g, &vec![1.0; 256], 0.05, 0.005, 0.25, 1e-4);
        assert!(p.per_point.iter().all(|&h| (h - 0.05).abs() < 1e-12));
    }

    #[test]
    fn abramson_dense_point_shrinks_and_empty_point_clips() {
        let g = grid();
        let mut pilot = vec![1.0; 256];
        pilot[100] = 0.0;
        let gm = geometric_mean(&g, &pilot, 1e-4);
        pilot[50] = 4.0 * gm;
        let gm = geometric_mean(&g, &pilot, 1e-4);
        // re-anchor so that pilot[50] is exactly 4g for the final geometric mean
        pilot[50] = 4.0 * gm;
        let p = BandwidthProfile::abramson(&g, &pilot, 0.05, 0.001, 0.25, 1e-4);
        let g_final = p.geo_mean;
        let expected = 0.05 * (g_final / pilot[50]).sqrt();
        assert!((p.at(50) - expected).abs() < 1e-12);
        assert!((p.at(50) - 0.025).abs() < 1e-3);
        assert_eq!(p.at(100), 0.25);
    }

    #[test]
    fn abramson_monotone_in_pilot_where_unclipped() {
        let g = grid();
        let pilot: Vec<f64> = g.points().map(|x| 0.5 + 2.0 * x).collect();
        let p = BandwidthProfile::abramson(&g, &pilot, 0.05, 0.001, 1.0, 1e-4);
        assert!(p.per_point.windows(2).all(|w| w[1] <= w[0]));
        assert!(p.per_point.iter().all(|&h| (0.001..=1.0).contains(&h)));
    }
}
