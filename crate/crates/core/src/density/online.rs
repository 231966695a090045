use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    check_bounds, h0_normal_reference, initial_h0, select, BandwidthProfile, Boundary, EstimatorMode, Grid,
    GridDensity, PilotDensity, DEFAULT_GRID_SIZE, DEFAULT_PILOT_FLOOR,
};
use crate::error::{Error, Result};

/// Static settings of one stream's density estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub grid_size: usize,
    pub mode: EstimatorMode,
    pub h_min: f64,
    pub h_max: f64,
    /// Events between global bandwidth refreshes.
    pub refresh_every: u64,
    /// Abramson profile from the pilot; `false` keeps `h(x) ≡ h0`.
    pub adaptive: bool,
    pub boundary: Boundary,
    /// Use the plug-in selector for `h0` once enough windowed scores exist.
    pub plug_in: bool,
    pub pilot_floor: f64,
    /// Running average until `1/α` events under forgetting.
    pub warm_start: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            grid_size: DEFAULT_GRID_SIZE,
            mode: EstimatorMode::ExponentialForgetting { alpha: 0.01 },
            h_min: 0.005,
            h_max: 0.25,
            refresh_every: 500,
            adaptive: true,
            boundary: Boundary::Reflect,
            plug_in: true,
            pilot_floor: DEFAULT_PILOT_FLOOR,
            warm_start: true,
        }
    }
}

impl DensityConfig {
    pub fn validate(&self) -> Result<()> {
        Grid::new(self.grid_size)?;
        self.mode.validate()?;
        check_bounds(self.h_min, self.h_max)?;
        if self.refresh_every == 0 {
            return Err(Error::config("refresh_every must be at least 1"));
        }
        if !(self.pilot_floor > 0.0) {
            return Err(Error::config("pilot_floor must be positive"));
        }
        Ok(())
    }
}

/// Exponentially weighted mean and variance with weight `max(α, 1/n)`, which
/// is the plain running average until `n` reaches `1/α`.
#[derive(Debug, Clone, Default)]
struct Moments {
    count: u64,
    mean: f64,
    var: f64,
}

impl Moments {
    fn push(&mut self, x: f64, alpha: f64) {
        self.count += 1;
        let w = alpha.max(1.0 / self.count as f64);
        let d = x - self.mean;
        self.mean += w * d;
        self.var = (1.0 - w) * (self.var + w * d * d);
    }
}

/// Score counts at grid resolution weighted like the forgetting estimator,
/// so the retained sample can be re-smoothed or fed to the plug-in selector.
/// Weights grow geometrically instead of decaying and are rescaled before
/// overflow, which keeps each push O(1).
#[derive(Debug, Clone)]
struct WeightedBins {
    bins: Vec<f64>,
    total: f64,
    sum_sq: f64,
    alpha: f64,
    warm_start: bool,
    count: u64,
}

impl WeightedBins {
    fn new(len: usize, alpha: f64, warm_start: bool) -> Self {
        WeightedBins {
            bins: vec![0.0; len],
            total: 0.0,
            sum_sq: 0.0,
            alpha,
            warm_start,
            count: 0,
        }
    }

    fn push(&mut self, j: usize) {
        self.count += 1;
        let a = if self.warm_start {
            self.alpha.max(1.0 / self.count as f64)
        } else {
            self.alpha
        };
        // the new point carries share `a` of the updated total
        let w = if self.total > 0.0 && a < 1.0 {
            a * self.total / (1.0 - a)
        } else {
            1.0
        };
        self.bins[j] += w;
        self.total += w;
        self.sum_sq += w * w;
        if self.total > 1e100 {
            let s = 1.0 / self.total;
            self.bins.iter_mut().for_each(|b| *b *= s);
            self.total = 1.0;
            self.sum_sq *= s * s;
        }
    }

    /// Kish effective size of the individual event weights.
    fn kish(&self) -> f64 {
        if self.sum_sq > 0.0 {
            self.total * self.total / self.sum_sq
        } else {
            0.0
        }
    }
}

/// Density, pilot and bandwidth profile of one stream, kept in step.
#[derive(Debug, Clone)]
pub struct OnlineDensity {
    config: DensityConfig,
    density: GridDensity,
    pilot: PilotDensity,
    profile: Arc<BandwidthProfile>,
    pilot_profile: Arc<BandwidthProfile>,
    moments: Moments,
    bins: Option<WeightedBins>,
    since_refresh: u64,
    refreshes: u64,
}

impl OnlineDensity {
    pub fn new(config: DensityConfig) -> Result<Self> {
        config.validate()?;
        let grid = Grid::new(config.grid_size)?;
        let density = GridDensity::new(grid, config.mode, config.boundary)?.with_warm_start(config.warm_start);
        let mut pilot = PilotDensity::new(grid, config.mode, config.boundary, config.pilot_floor)?;
        pilot.state = pilot.state.with_warm_start(config.warm_start);
        let h0 = initial_h0(config.mode).clamp(config.h_min, config.h_max);
        let flat = Arc::new(BandwidthProfile::uniform(&grid, h0, config.h_min, config.h_max));
        let bins = match config.mode {
            EstimatorMode::ExponentialForgetting { alpha } => {
                Some(WeightedBins::new(grid.len(), alpha, config.warm_start))
            }
            EstimatorMode::SlidingWindow { .. } => None,
        };
        Ok(OnlineDensity {
            config,
            density,
            pilot,
            profile: Arc::clone(&flat),
            pilot_profile: flat,
            moments: Moments::default(),
            bins,
            since_refresh: 0,
            refreshes: 0,
        })
    }

    pub fn config(&self) -> &DensityConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        self.density.grid()
    }

    pub fn density(&self) -> &GridDensity {
        &self.density
    }

    pub fn pilot(&self) -> &PilotDensity {
        &self.pilot
    }

    pub fn profile(&self) -> &Arc<BandwidthProfile> {
        &self.profile
    }

    pub fn h0(&self) -> f64 {
        self.profile.h0
    }

    pub fn n_eff(&self) -> f64 {
        self.density.n_eff()
    }

    pub fn bandwidth_refreshes(&self) -> u64 {
        self.refreshes
    }

    /// Updates density and pilot with one score; refreshes the bandwidth every
    /// `refresh_every` accepted events.
    pub fn ingest(&mut self, score: f64) -> Result<()> {
        self.density.update(score, &self.profile)?;
        self.pilot
            .state
            .update(score, &self.pilot_profile)
            .expect("pilot accepts whatever the density accepted");
        let alpha = match self.config.mode {
            EstimatorMode::ExponentialForgetting { alpha } => alpha,
            EstimatorMode::SlidingWindow { .. } => 0.0,
        };
        self.moments.push(score, alpha);
        if let Some(b) = &mut self.bins {
            b.push((score / self.density.grid().spacing()).round() as usize);
        }
        self.since_refresh += 1;
        if self.since_refresh >= self.config.refresh_every {
            self.refresh_bandwidth();
        }
        Ok(())
    }

    /// Re-selects `h0` and rebuilds the profile from the current pilot.
    pub fn refresh_bandwidth(&mut self) {
        self.since_refresh = 0;
        self.refreshes += 1;
        let n_eff = self.n_eff();
        if n_eff < 1.0 {
            return;
        }
        let h0 = self.select_h0(n_eff);
        let grid = *self.grid();
        let (lo, hi) = (self.config.h_min, self.config.h_max);
        let pilot_h0 = h0_normal_reference(n_eff, self.sample_std())
            .map(|h| h.clamp(lo, hi))
            .unwrap_or(h0);
        self.pilot_profile = Arc::new(BandwidthProfile::uniform(&grid, pilot_h0, lo, hi));
        self.profile = Arc::new(if self.config.adaptive {
            BandwidthProfile::abramson(&grid, self.pilot.values(), h0, lo, hi, self.config.pilot_floor)
        } else {
            BandwidthProfile::uniform(&grid, h0, lo, hi)
        });
    }

    /// The retained sample as `(location, weight)`: window scores with unit
    /// weight, or grid-binned scores with forgetting weights.
    pub fn weighted_sample(&self) -> Vec<(f64, f64)> {
        match &self.bins {
            Some(b) => self
                .grid()
                .points()
                .zip(b.bins.iter().copied())
                .filter(|p| p.1 > 0.0)
                .collect(),
            None => self.density.window_scores().map(|s| (s, 1.0)).collect(),
        }
    }

    fn select_h0(&self, n_eff: f64) -> f64 {
        let (lo, hi) = (self.config.h_min, self.config.h_max);
        if self.config.plug_in {
            let h = match self.config.mode {
                EstimatorMode::SlidingWindow { .. } => {
                    let scores: Vec<f64> = self.density.window_scores().collect();
                    select::sheather_jones(&scores)
                }
                EstimatorMode::ExponentialForgetting { .. } => {
                    let kish = self.bins.as_ref().map_or(0.0, |b| b.kish());
                    select::sheather_jones_weighted(&self.weighted_sample(), kish)
                }
            };
            if let Ok(h) = h {
                return h.clamp(lo, hi);
            }
        }
        h0_normal_reference(n_eff, self.sample_std())
            .map(|h| h.clamp(lo, hi))
            .unwrap_or(self.profile.h0)
    }

    /// Standard deviation of the retained window, or the exponentially
    /// weighted estimate under forgetting.
    pub fn sample_std(&self) -> f64 {
        match self.config.mode {
            EstimatorMode::SlidingWindow { .. } => {
                let n = self.density.n_eff();
                if n < 2.0 {
                    return 0.5;
                }
                let mean = self.density.window_scores().sum::<f64>() / n;
                let ss: f64 = self.density.window_scores().map(|s| (s - mean).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            }
            EstimatorMode::ExponentialForgetting { .. } => self.moments.var.sqrt(),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let grid = *self.grid();
        Snapshot {
            x: grid.points().collect(),
            f_hat: self.density.values().to_vec(),
            pilot: self.pilot.values().to_vec(),
            h: self.profile.per_point.clone(),
            n_eff: self.n_eff(),
            h0: self.h0(),
            event_count: self.density.event_count(),
        }
    }
}

/// Immutable copy of the estimator state for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub x: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub pilot: Vec<f64>,
    pub h: Vec<f64>,
    pub n_eff: f64,
    pub h0: f64,
    pub event_count: u64,
}

impl Snapshot {
    /// Columns `x,f_hat,pilot,h`, one row per grid point.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,f_hat,pilot,h")?;
        for j in 0..self.x.len() {
            writeln!(out, "{},{},{},{}", self.x[j], self.f_hat[j], self.pilot[j], self.h[j])?;
        }
        Ok(())
    }
}
