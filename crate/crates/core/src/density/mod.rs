//! Per-stream density state on a fixed grid over `[0, 1]`.
//!
//! Every accepted score adds one kernel stencil, evaluated at each grid point
//! `x_j` with that point's bandwidth `h(x_j)` and reflected across both ends
//! of the interval. Stencils are normalized to unit trapezoid mass on the
//! grid, so the convex forgetting update and the window average both keep
//! `∫f̂ = 1` up to rounding.

mod grid;
mod online;
mod profile;
mod select;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::kernel;

pub use grid::{Grid, DEFAULT_GRID_SIZE, MIN_GRID_SIZE};
pub use online::{DensityConfig, OnlineDensity, Snapshot};
pub use profile::{geometric_mean, BandwidthProfile, DEFAULT_PILOT_FLOOR};
pub use select::{
    h0_normal_reference, h0_sheather_jones, sheather_jones, sheather_jones_weighted, NORMAL_SCALE_CONSTANT,
};

/// Minimum window length for the sliding-window estimator.
pub const MIN_WINDOW: usize = 50;

/// How the stream's memory is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Average of the `window` most recent stencils.
    SlidingWindow { window: usize },
    /// `f ← (1-α) f + α k` per event.
    ExponentialForgetting { alpha: f64 },
}

impl EstimatorMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorMode::SlidingWindow { window } if window < MIN_WINDOW => {
                Err(Error::config(format!("window {window} below minimum {MIN_WINDOW}")))
            }
            EstimatorMode::ExponentialForgetting { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(Error::config(format!("forgetting factor {alpha} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    /// The effective sample size the estimator settles at: `W` or `1/α`.
    pub fn nominal_size(&self) -> f64 {
        match *self {
            EstimatorMode::SlidingWindow { window } => window as f64,
            EstimatorMode::ExponentialForgetting { alpha } => 1.0 / alpha,
        }
    }
}

/// Boundary treatment of the stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Mirror terms at `-s` and `2 - s`.
    #[default]
    Reflect,
    /// Plain kernel truncated to `[0, 1]`; the whole estimate is renormalized.
    Truncate,
}

#[derive(Debug, Clone)]
struct WindowEntry {
    score: f64,
    profile: Arc<BandwidthProfile>,
}

/// Fixed-grid density estimate with streaming updates.
#[derive(Debug, Clone)]
pub struct GridDensity {
    grid: Grid,
    mode: EstimatorMode,
    boundary: Boundary,
    values: Vec<f64>,
    event_count: u64,
    rejected: u64,
    window: VecDeque<WindowEntry>,
    sum: Vec<f64>,
    evictions_since_rebuild: usize,
    stencil: Vec<f64>,
    touches: u64,
    warm_start: bool,
}

impl GridDensity {
    /// Uniform density (`f ≡ 1`) with no events.
    pub fn new(grid: Grid, mode: EstimatorMode, boundary: Boundary) -> Result<Self> {
        mode.validate()?;
        let g = grid.len();
        let (window, sum) = match mode {
            EstimatorMode::SlidingWindow { window } => (VecDeque::with_capacity(window + 1), vec![0.0; g]),
            EstimatorMode::ExponentialForgetting { .. } => (VecDeque::new(), Vec::new()),
        };
        Ok(GridDensity {
            grid,
            mode,
            boundary,
            values: vec![1.0; g],
            event_count: 0,
            rejected: 0,
            window,
            sum,
            evictions_since_rebuild: 0,
            stencil: vec![0.0; g],
            touches: 0,
            warm_start: false,
        })
    }

    /// Under forgetting, blend with weight `max(α, 1/n)` for the `n`-th event,
    /// so the estimate is the plain average of the first `1/α` events and the
    /// uniform starting curve is dropped at the first event.
    pub fn with_warm_start(mut self, on: bool) -> Self {
        self.warm_start = on;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// Scores refused because they fell outside `[0, 1]`.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Total grid-point visits performed by updates so far.
    pub fn grid_touches(&self) -> u64 {
        self.touches
    }

    /// `min(events, W)` in window mode, `min(events, 1/α)` under forgetting.
    pub fn n_eff(&self) -> f64 {
        match self.mode {
            EstimatorMode::SlidingWindow { .. } => self.window.len() as f64,
            EstimatorMode::ExponentialForgetting { alpha } => (self.event_count as f64).min(1.0 / alpha),
        }
    }

    /// Scores currently retained (window mode only; empty under forgetting).
    pub fn window_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().map(|e| e.score)
    }

    /// Retained scores with the profile each was smoothed with.
    pub fn window_items(&self) -> impl Iterator<Item = (f64, &BandwidthProfile)> + '_ {
        self.window.iter().map(|e| (e.score, &*e.profile))
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// `U(c) = ∫_c^1 f̂`.
    pub fn tail_mass(&self, c: f64) -> f64 {
        let tail = self.grid.tail_curve(&self.values);
        self.grid.tail_from(&self.values, &tail, c)
    }

    /// Adds one score, dispatching on the estimator mode. Out-of-range scores
    /// are counted and leave the state untouched.
    pub fn update(&mut self, score: f64, profile: &Arc<BandwidthProfile>) -> Result<()> {
        if let Err(e) = check_unit(score) {
            self.rejected += 1;
            return Err(e);
        }
        match self.mode {
            EstimatorMode::ExponentialForgetting { alpha } => {
                let a = if self.warm_start {
                    alpha.max(1.0 / (self.event_count + 1) as f64)
                } else {
                    alpha
                };
                self.forget(a, score, profile)
            }
            EstimatorMode::SlidingWindow { window } => self.slide(window, score, profile),
        }
        self.event_count += 1;
        Ok(())
    }

    /// Forgetting-mode update. Errors if the state is windowed.
    pub fn update_forgetting(&mut self, score: f64, profile: &Arc<BandwidthProfile>) -> Result<()> {
        match self.mode {
            EstimatorMode::ExponentialForgetting { .. } => self.update(score, profile),
            _ => Err(Error::config("update_forgetting on a windowed estimator")),
        }
    }

    /// Window-mode update. Errors if the state uses forgetting.
    pub fn update_window(&mut self, score: f64, profile: &Arc<BandwidthProfile>) -> Result<()> {
        match self.mode {
            EstimatorMode::SlidingWindow { .. } => self.update(score, profile),
            _ => Err(Error::config("update_window on a forgetting estimator")),
        }
    }

    fn forget(&mut self, alpha: f64, score: f64, profile: &BandwidthProfile) {
        let keep = 1.0 - alpha;
        for v in self.values.iter_mut() {
            *v *= keep;
        }
        self.touches += self.values.len() as u64;
        let mut scratch = std::mem::take(&mut self.stencil);
        let st = self.compute_stencil(score, profile, &mut scratch);
        let scale = alpha / st.full_mass;
        for j in st.lo..=st.hi {
            self.values[j] += scale * scratch[j];
        }
        self.touches += (st.hi - st.lo + 1) as u64;
        self.stencil = scratch;
        if self.boundary == Boundary::Truncate {
            // lost mass beyond the edges is restored by rescaling the whole curve
            let m = keep * 1.0 + alpha * st.inside_mass / st.full_mass;
            let inv = 1.0 / m;
            for v in self.values.iter_mut() {
                *v *= inv;
            }
            self.touches += self.values.len() as u64;
        }
    }

    fn slide(&mut self, window: usize, score: f64, profile: &Arc<BandwidthProfile>) {
        let mut scratch = std::mem::take(&mut self.stencil);
        if self.window.len() == window {
            let old = self.window.pop_front().expect("full window");
            self.accumulate(old.score, &old.profile, -1.0, &mut scratch);
            self.evictions_since_rebuild += 1;
        }
        self.accumulate(score, profile, 1.0, &mut scratch);
        self.window.push_back(WindowEntry {
            score,
            profile: Arc::clone(profile),
        });
        if self.evictions_since_rebuild >= window {
            self.rebuild_sum(&mut scratch);
        }
        self.stencil = scratch;
        self.materialize_window();
    }

    fn accumulate(&mut self, score: f64, profile: &BandwidthProfile, sign: f64, scratch: &mut [f64]) {
        let st = self.compute_stencil(score, profile, scratch);
        let scale = sign / st.full_mass;
        for j in st.lo..=st.hi {
            self.sum[j] += scale * scratch[j];
        }
        self.touches += (st.hi - st.lo + 1) as u64;
    }

    /// Recomputes the running sum from the retained entries, discarding
    /// accumulated add/subtract rounding.
    fn rebuild_sum(&mut self, scratch: &mut [f64]) {
        self.sum.iter_mut().for_each(|v| *v = 0.0);
        let entries: Vec<WindowEntry> = self.window.iter().cloned().collect();
        for e in &entries {
            self.accumulate(e.score, &e.profile, 1.0, scratch);
        }
        self.evictions_since_rebuild = 0;
    }

    fn materialize_window(&mut self) {
        let n = self.window.len();
        if n == 0 {
            return;
        }
        let mut inv = 1.0 / n as f64;
        if self.boundary == Boundary::Truncate {
            let m = self.grid.integrate(&self.sum);
            if m > 0.0 {
                inv = 1.0 / m;
            }
        }
        for (v, s) in self.values.iter_mut().zip(&self.sum) {
            *v = s.max(0.0) * inv;
        }
        self.touches += self.values.len() as u64;
    }

    /// Fills `out[lo..=hi]` with the (reflected or truncated) balloon stencil of
    /// `score` and reports its grid mass.
    fn compute_stencil(&self, score: f64, profile: &BandwidthProfile, out: &mut [f64]) -> Stencil {
        compute_stencil(&self.grid, self.boundary, score, profile, out)
    }

    /// Batch recomputation from an explicit list of `(score, profile)` pairs:
    /// the plain average of normalized stencils. Used as an oracle for the
    /// incremental window update.
    pub fn batch_average(grid: &Grid, boundary: Boundary, items: &[(f64, &BandwidthProfile)]) -> Vec<f64> {
        let g = grid.len();
        let mut acc = vec![0.0; g];
        let mut out = vec![0.0; g];
        for &(s, p) in items {
            let st = compute_stencil(grid, boundary, s, p, &mut out);
            for j in st.lo..=st.hi {
                acc[j] += out[j] / st.full_mass;
            }
        }
        if items.is_empty() {
            return vec![1.0; g];
        }
        let norm = match boundary {
            Boundary::Reflect => items.len() as f64,
            Boundary::Truncate => grid.integrate(&acc),
        };
        acc.iter().map(|v| v / norm).collect()
    }
}

/// Kernel smooth of weighted point masses with a single profile, normalized
/// to unit mass. Points outside `[0, 1]` or with nonpositive weight are skipped.
pub fn resmooth<I>(grid: &Grid, boundary: Boundary, points: I, profile: &BandwidthProfile) -> Vec<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let g = grid.len();
    let mut acc = vec![0.0; g];
    let mut out = vec![0.0; g];
    for (s, w) in points {
        if !(w > 0.0) || !(0.0..=1.0).contains(&s) {
            continue;
        }
        let st = compute_stencil(grid, boundary, s, profile, &mut out);
        let scale = w / st.full_mass;
        for j in st.lo..=st.hi {
            acc[j] += scale * out[j];
        }
    }
    let m = grid.integrate(&acc);
    if m > 0.0 {
        acc.iter_mut().for_each(|v| *v /= m);
    } else {
        acc.iter_mut().for_each(|v| *v = 1.0);
    }
    acc
}

struct Stencil {
    lo: usize,
    hi: usize,
    /// Mass the stencil would carry with no truncation (the normalizer).
    full_mass: f64,
    /// Mass landing inside `[0, 1]`; equals `full_mass` under reflection.
    inside_mass: f64,
}

fn compute_stencil(
    grid: &Grid,
    boundary: Boundary,
    score: f64,
    profile: &BandwidthProfile,
    out: &mut [f64],
) -> Stencil {
    let dx = grid.spacing();
    let reach = profile.widest();
    let (lo, hi) = grid.index_range(score, reach).unwrap_or_else(|| nearest(grid, score));
    let mut inside = 0.0;
    match boundary {
        Boundary::Reflect => {
            for j in lo..=hi {
                let k = kernel::reflected(grid.point(j), score, profile.at(j));
                out[j] = k;
                inside += grid.weight(j) * k;
            }
        }
        Boundary::Truncate => {
            for j in lo..=hi {
                let k = kernel::scaled(grid.point(j), score, profile.at(j));
                out[j] = k;
                inside += grid.weight(j) * k;
            }
        }
    }
    let full = match boundary {
        Boundary::Reflect => inside,
        Boundary::Truncate => {
            // virtual grid points past the edges, using the edge bandwidths
            let mut outside = 0.0;
            let g = grid.len();
            let mut i = 1usize;
            loop {
                let x = -(i as f64) * dx;
                if score - x >= reach {
                    break;
                }
                outside += dx * kernel::scaled(x, score, profile.at(0));
                i += 1;
            }
            let mut i = 1usize;
            loop {
                let x = 1.0 + i as f64 * dx;
                if x - score >= reach {
                    break;
                }
                outside += dx * kernel::scaled(x, score, profile.at(g - 1));
                i += 1;
            }
            // endpoints carry a full cell weight on the extended grid
            let edge_fix = 0.5 * dx * (out[0] * (lo == 0) as u8 as f64 + out[g - 1] * (hi == g - 1) as u8 as f64);
            inside + outside + edge_fix
        }
    };
    if full > 0.0 {
        Stencil {
            lo,
            hi,
            full_mass: full,
            inside_mass: inside,
        }
    } else {
        // degenerate footprint: put the unit mass on the nearest grid point
        let (j, _) = nearest(grid, score);
        out[j] = 1.0 / grid.weight(j);
        Stencil {
            lo: j,
            hi: j,
            full_mass: 1.0,
            inside_mass: 1.0,
        }
    }
}

fn nearest(grid: &Grid, score: f64) -> (usize, usize) {
    let j = ((score / grid.spacing()).round() as usize).min(grid.len() - 1);
    (j, j)
}

/// Fixed-bandwidth auxiliary density feeding the adaptive profile.
#[derive(Debug, Clone)]
pub struct PilotDensity {
    pub state: GridDensity,
    pub floor: f64,
}

impl PilotDensity {
    pub fn new(grid: Grid, mode: EstimatorMode, boundary: Boundary, floor: f64) -> Result<Self> {
        Ok(PilotDensity {
            state: GridDensity::new(grid, mode, boundary)?,
            floor,
        })
    }

    pub fn values(&self) -> &[f64] {
        self.state.values()
    }

    pub fn geometric_mean(&self) -> f64 {
        geometric_mean(self.state.grid(), self.state.values(), self.floor)
    }
}

/// Builds the uniform-initialized density, pilot and starting profile.
///
/// The starting `h0` is the normal-reference value for a uniform score
/// population (`σ = 1/√12`) at the estimator's nominal sample size.
pub fn init_state(
    grid_size: usize,
    mode: EstimatorMode,
    h_min: f64,
    h_max: f64,
) -> Result<(GridDensity, PilotDensity, BandwidthProfile)> {
    let grid = Grid::new(grid_size)?;
    check_bounds(h_min, h_max)?;
    let density = GridDensity::new(grid, mode, Boundary::Reflect)?;
    let pilot = PilotDensity::new(grid, mode, Boundary::Reflect, DEFAULT_PILOT_FLOOR)?;
    let h0 = initial_h0(mode);
    let profile = BandwidthProfile::uniform(&grid, h0, h_min, h_max);
    Ok((density, pilot, profile))
}

pub(crate) fn initial_h0(mode: EstimatorMode) -> f64 {
    let sigma = 1.0 / 12f64.sqrt();
    NORMAL_SCALE_CONSTANT * sigma * mode.nominal_size().max(1.0).powf(-0.2)
}

pub(crate) fn check_bounds(h_min: f64, h_max: f64) -> Result<()> {
    if h_min > 0.0 && h_min <= h_max && h_max <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "bandwidth bounds must satisfy 0 < h_min <= h_max <= 1, got [{h_min}, {h_max}]"
        )))
    }
}
