use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_GRID_SIZE: usize = 64;
pub const DEFAULT_GRID_SIZE: usize = 512;

/// Uniform grid of `G` points spanning `[0, 1]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    size: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(size: usize) -> Result<Self> {
        if size < MIN_GRID_SIZE {
            return Err(Error::config(format!("grid size {size} below minimum {MIN_GRID_SIZE}")));
        }
        Ok(Grid {
            size,
            spacing: 1.0 / (size - 1) as f64,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.size {
            1.0
        } else {
            j as f64 * self.spacing
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.size).map(move |j| self.point(j))
    }

    /// Trapezoid weight of grid point `j` (half at the endpoints).
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.size {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    /// Index range `[lo, hi]` of grid points within `radius` of `center`,
    /// clamped to the grid.
    #[inline]
    pub fn index_range(&self, center: f64, radius: f64) -> Option<(usize, usize)> {
        let lo = ((center - radius) / self.spacing).ceil();
        let hi = ((center + radius) / self.spacing).floor();
        let last = (self.size - 1) as f64;
        let lo = lo.max(0.0);
        let hi = hi.min(last);
        if lo > hi {
            None
        } else {
            Some((lo as usize, hi as usize))
        }
    }

    /// Trapezoid integral of grid values over `[0, 1]`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.size);
        let n = values.len();
        let inner: f64 = values[1..n - 1].iter().sum();
        (inner + 0.5 * (values[0] + values[n - 1])) * self.spacing
    }

    /// Linear interpolation of grid values at `x` (clamped to `[0, 1]`).
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let pos = x / self.spacing;
        let j = (pos.floor() as usize).min(self.size - 2);
        let t = pos - j as f64;
        values[j] * (1.0 - t) + values[j + 1] * t
    }

    /// Tail integrals `U[j] = ∫_{x_j}^1 f` by the trapezoid rule; `U[G-1] = 0`.
    pub fn tail_curve(&self, values: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut tail = vec![0.0; n];
        for j in (0..n - 1).rev() {
            tail[j] = tail[j + 1] + 0.5 * (values[j] + values[j + 1]) * self.spacing;
        }
        tail
    }

    /// `∫_c^1 f` with the cell containing `c` integrated against the linear
    /// interpolant.
    pub fn tail_from(&self, values: &[f64], tail: &[f64], c: f64) -> f64 {
        let c = c.clamp(0.0, 1.0);
        if c >= 1.0 {
            return 0.0;
        }
        let pos = c / self.spacing;
        let j = (pos.floor() as usize).min(self.size - 2);
        let t = pos - j as f64;
        let fc = values[j] * (1.0 - t) + values[j + 1] * t;
        let partial = 0.5 * (fc + values[j + 1]) * (1.0 - t) * self.spacing;
        partial + tail[j + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(Grid::new(32).is_err());
        assert!(Grid::new(64).is_ok());
    }

    #[test]
    fn endpoints_and_order() {
        let g = Grid::new(101).unwrap();
        assert_eq!(g.point(0), 0.0);
        assert_eq!(g.point(100), 1.0);
        let pts: Vec<f64> = g.points().collect();
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn integrates_constant_and_linear() {
        let g = Grid::new(65).unwrap();
        let ones = vec![1.0; 65];
        assert!((g.integrate(&ones) - 1.0).abs() < 1e-14);
        let lin: Vec<f64> = g.points().map(|x| 2.0 * x).collect();
        assert!((g.integrate(&lin) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tail_of_uniform() {
        let g = Grid::new(256).unwrap();
        let ones = vec![1.0; 256];
        let tail = g.tail_curve(&ones);
        assert!((g.tail_from(&ones, &tail, 0.8) - 0.2).abs() < 1e-12);
        assert!((g.tail_from(&ones, &tail, 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(g.tail_from(&ones, &tail, 1.0), 0.0);
    }

    #[test]
    fn index_range_clamps() {
        let g = Grid::new(101).unwrap();
        assert_eq!(g.index_range(0.5, 0.05), Some((45, 55)));
        assert_eq!(g.index_range(0.0, 0.025), Some((0, 2)));
        assert_eq!(g.index_range(-0.5, 0.1), None);
    }
}
