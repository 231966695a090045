//! Interval-by-interval simulation of one stream under one policy.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::capacity::{CapacityTarget, DeployedCuts, DEFAULT_TOLERANCE};
use crate::density::{Boundary, Snapshot};
use crate::engine::{DecisionRecord, Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::metrics::IntervalRecord;
use crate::router::{IntervalRouter, QueueLabel, RoutingDecision};
use crate::simgen::{
    batch_topk, generate_interval, local_density, BAStreamProfile, BacklogState, EwmaController, WindowedGk,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Adaptive reflected density, valley snapping and hysteresis.
    Ours,
    #[serde(rename = "fixed_bw")]
    FixedBandwidth,
    NoReflect,
    NoSnap,
    NoHysteresis,
    /// Exact top-`C` of each interval, computed after the fact.
    BatchTopk,
    /// Quantile of the last few intervals from quantile sketches.
    WindowQuantile,
    /// Proportional controller on intake error.
    Ewma,
}

impl Policy {
    pub const ALL: [Policy; 8] = [
        Policy::Ours,
        Policy::FixedBandwidth,
        Policy::NoReflect,
        Policy::NoSnap,
        Policy::NoHysteresis,
        Policy::BatchTopk,
        Policy::WindowQuantile,
        Policy::Ewma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Ours => "ours",
            Policy::FixedBandwidth => "fixed_bw",
            Policy::NoReflect => "no_reflect",
            Policy::NoSnap => "no_snap",
            Policy::NoHysteresis => "no_hysteresis",
            Policy::BatchTopk => "batch_topk",
            Policy::WindowQuantile => "window_quantile",
            Policy::Ewma => "ewma",
        }
    }

    /// Engine settings for the density-based policies; `None` for baselines.
    pub fn engine_config(self, base: &EngineConfig) -> Option<EngineConfig> {
        let mut c = base.clone();
        match self {
            Policy::Ours => {}
            Policy::FixedBandwidth => c.density.adaptive = false,
            Policy::NoReflect => c.density.boundary = Boundary::Truncate,
            Policy::NoSnap => c.snapping = false,
            Policy::NoHysteresis => c.hysteresis = false,
            Policy::BatchTopk | Policy::WindowQuantile | Policy::Ewma => return None,
        }
        Some(c)
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown policy `{s}`")))
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Intervals covered by the window-quantile baseline.
    pub window_intervals: usize,
    pub gk_epsilon: f64,
    pub ewma: EwmaController,
    /// Half-width of the histogram used for baseline elasticities and the
    /// controller's density estimate.
    pub density_half_width: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            window_intervals: 10,
            gk_epsilon: 1e-3,
            ewma: EwmaController::default(),
            density_half_width: 0.02,
        }
    }
}

/// Everything that determines a simulation apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub intervals: u64,
    /// Leading intervals excluded from steady-state metrics.
    #[serde(default)]
    pub warmup: u64,
    pub streams: Vec<BAStreamProfile>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Density snapshots are taken after these intervals.
    #[serde(default)]
    pub snapshot_intervals: Vec<u64>,
    /// Per-event routing is logged for these intervals.
    #[serde(default)]
    pub routing_intervals: Vec<u64>,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(Error::config("intervals must be at least 1"));
        }
        if self.warmup >= self.intervals {
            return Err(Error::config("warmup must be shorter than the run"));
        }
        if self.streams.is_empty() {
            return Err(Error::config("streams must not be empty"));
        }
        for s in &self.streams {
            s.validate()?;
        }
        if self
            .streams
            .iter()
            .enumerate()
            .any(|(i, s)| self.streams[..i].iter().any(|o| o.name == s.name))
        {
            return Err(Error::config("stream names must be unique"));
        }
        self.engine.validate()?;
        if self.baselines.window_intervals == 0 {
            return Err(Error::config("baselines.window_intervals must be at least 1"));
        }
        if !(self.baselines.gk_epsilon > 0.0 && self.baselines.gk_epsilon < 0.5) {
            return Err(Error::config("baselines.gk_epsilon outside (0, 0.5)"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        Ok(())
    }
}

/// A decision record tagged with the interval it was made for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDecision {
    pub interval_id: u64,
    #[serde(flatten)]
    pub record: DecisionRecord,
}

#[derive(Debug, Clone, Default)]
pub struct StreamRun {
    pub records: Vec<IntervalRecord>,
    pub decisions: Vec<IntervalDecision>,
    pub snapshots: Vec<(u64, Snapshot)>,
    pub routing: Vec<RoutingDecision>,
}

/// Seed of the score generator for stream `index` under run seed `seed`;
/// every policy sees the same scores.
pub fn stream_seed(seed: u64, profile: &BAStreamProfile, index: usize) -> u64 {
    let mut z = seed ^ profile.seed.rotate_left(17) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Driver {
    Engine(Box<Engine>),
    TopK,
    Window(WindowedGk),
    Ewma { up: f64, std: Option<f64> },
}

/// Runs stream `index` of the scenario under `policy`.
pub fn run_stream(scenario: &Scenario, index: usize, policy: Policy, seed: u64) -> Result<StreamRun> {
    let profile = scenario
        .streams
        .get(index)
        .ok_or_else(|| Error::config(format!("no stream at index {index}")))?;
    let gen_seed = stream_seed(seed, profile, index);
    let base = &scenario.baselines;
    let mut driver = match policy.engine_config(&scenario.engine) {
        Some(cfg) => Driver::Engine(Box::new(Engine::new(cfg)?)),
        None => match policy {
            Policy::BatchTopk => Driver::TopK,
            Policy::WindowQuantile => Driver::Window(WindowedGk::new(base.gk_epsilon, base.window_intervals)?),
            _ => Driver::Ewma {
                up: 1.0 - profile.capacity.kappa_up,
                std: profile.capacity.kappa_up_std.map(|k| 1.0 - k),
            },
        },
    };
    let refresh_every = scenario.engine.refresh_intervals;
    let n = profile.rate as f64;
    let mut backlog = BacklogState::new(0.0, f64::INFINITY);
    let mut prev_cuts: Option<DeployedCuts> = None;
    let mut out = StreamRun::default();

    for t in 0..scenario.intervals {
        let scores = generate_interval(profile, gen_seed, t);
        let c_up = profile.capacity_up(t);
        let c_std = profile.capacity_std(t);
        let target = CapacityTarget {
            kappa_up: (c_up / n).min(0.999),
            kappa_up_std: profile.capacity.kappa_up_std.map(|_| ((c_up + c_std) / n).min(0.999)),
            delta: scenario.tolerance * c_up,
            count_basis: n,
        };
        let quantile_cuts = |k_up: f64, k_std: Option<f64>, q: &dyn Fn(f64) -> f64| match k_std {
            Some(ks) if ks > k_up => {
                let (lo, hi) = (q(1.0 - ks), q(1.0 - k_up));
                if lo < hi {
                    DeployedCuts::pair(lo, hi, lo, hi)
                } else {
                    DeployedCuts::single(hi, hi)
                }
            }
            _ => {
                let c = q(1.0 - k_up);
                DeployedCuts::single(c, c)
            }
        };

        let mut t_star = f64::NAN;
        let cuts = match &mut driver {
            Driver::Engine(e) => {
                if t % refresh_every == 0 || e.deployed().is_none() {
                    let rec = e.refresh(&target)?;
                    out.decisions.push(IntervalDecision {
                        interval_id: t,
                        record: rec,
                    });
                }
                if let Some(d) = out.decisions.last() {
                    t_star = *d.record.t_star.last().unwrap_or(&f64::NAN);
                }
                e.deployed().cloned().expect("refresh deploys cuts")
            }
            Driver::TopK => {
                let take = |k: f64| batch_topk(&scores, (k * n).round() as usize).min(1.0);
                let d = quantile_cuts(target.kappa_up, target.kappa_up_std, &|q| take(1.0 - q));
                t_star = d.escalation_cut();
                d
            }
            Driver::Window(w) => {
                let d = quantile_cuts(target.kappa_up, target.kappa_up_std, &|q| w.query(q).unwrap_or(q));
                t_star = d.escalation_cut();
                d
            }
            Driver::Ewma { up, std } => {
                t_star = *up;
                match std {
                    Some(s) if *s < *up => DeployedCuts::pair(*s, *up, *s, *up),
                    _ => DeployedCuts::single(*up, *up),
                }
            }
        };

        let mut router = IntervalRouter::new(cuts.clone(), c_up, c_std, t);
        let (mut routed_up, mut routed_std) = (0u64, 0u64);
        let log_routing = scenario.routing_intervals.contains(&t);
        let (mut atoms, mut flips) = (0u64, 0u64);
        for &s in &scores {
            let d = router.decide(s)?;
            match d.queue {
                QueueLabel::Escalation => routed_up += 1,
                QueueLabel::Standard => routed_std += 1,
                QueueLabel::Hibernation => {}
            }
            if let Some(prev) = &prev_cuts {
                let on_cut = |c: &DeployedCuts| c.cuts.contains(&s);
                if on_cut(&cuts) || on_cut(prev) {
                    atoms += 1;
                    flips += (crate::router::route(s, prev)? != d.queue) as u64;
                }
            }
            if log_routing {
                out.routing.push(d);
            }
        }
        let (taken_up, taken_std) = router.taken();
        let level = backlog.step(taken_up as f64, c_up)?;

        let hw = base.density_half_width;
        let (elasticity_up, anchored_up, anchored_std) = match &driver {
            Driver::Engine(_) => (
                *cuts.elasticity.last().unwrap_or(&0.0),
                *cuts.anchored.last().unwrap_or(&false),
                (cuts.cuts.len() == 2).then(|| cuts.anchored[0]),
            ),
            _ => (
                n * local_density(&scores, cuts.escalation_cut(), hw),
                false,
                (cuts.cuts.len() == 2).then_some(false),
            ),
        };

        let ops_before = match &driver {
            Driver::Engine(e) => e.density().density().grid_touches(),
            _ => 0,
        };
        match &mut driver {
            Driver::Engine(e) => scores.iter().for_each(|&s| e.ingest(s)),
            Driver::TopK => {}
            Driver::Window(w) => {
                w.open_interval();
                scores.iter().for_each(|&s| w.insert(s));
            }
            Driver::Ewma { up, std } => {
                let ctl = base.ewma;
                *up = ctl.step(*up, routed_up as f64, c_up, n, local_density(&scores, *up, hw));
                if let Some(s) = std {
                    let demand = (routed_up + routed_std) as f64;
                    *s = ctl.step(*s, demand, c_up + c_std, n, local_density(&scores, *s, hw));
                }
            }
        }
        let update_ops = match &driver {
            Driver::Engine(e) => e.density().density().grid_touches() - ops_before,
            _ => 0,
        };
        if let Driver::Engine(e) = &driver {
            if scenario.snapshot_intervals.contains(&t) {
                out.snapshots.push((t, e.density().snapshot()));
            }
        }

        out.records.push(IntervalRecord {
            ba: profile.name.clone(),
            policy: policy.as_str().to_string(),
            seed,
            interval_id: t,
            arrivals: scores.len() as u64,
            alerts: taken_up,
            target: c_up,
            routed_up,
            routed_std,
            taken_std,
            target_std: c_std,
            cut_up: cuts.escalation_cut(),
            trim_up: cuts.escalation_trim(),
            cut_std: cuts.standard_cut(),
            trim_std: cuts.standard_trim(),
            t_star,
            elasticity_up,
            anchored_up,
            anchored_std,
            backlog: level,
            tie_atoms: atoms,
            tie_flips: flips,
            update_ops,
        });
        prev_cuts = Some(cuts);
    }
    Ok(out)
}
