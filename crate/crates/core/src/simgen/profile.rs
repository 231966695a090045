use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaComponent {
    pub alpha: f64,
    pub beta: f64,
    pub weight: f64,
}

impl BetaComponent {
    pub const fn new(alpha: f64, beta: f64, weight: f64) -> Self {
        BetaComponent { alpha, beta, weight }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Component parameters in force at interval `at`; parameters are linearly
/// interpolated between consecutive keyframes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub at: u64,
    pub components: Vec<BetaComponent>,
}

/// `w_k ← w_k (1 + A sin(2π t / P + 2π k / K))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seasonality {
    pub amplitude: f64,
    pub period: u64,
}

/// Abrupt replacement of the mixture from interval `at` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub at: u64,
    pub components: Vec<BetaComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressKind {
    /// Adds a high-score Beta(20, 2) component.
    TailExplosion,
    /// Pulls all component means toward their common mean, in and back out.
    ValleyVanish,
    /// Coarsens the discretization step.
    RoundingShift,
}

impl std::str::FromStr for StressKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail_explosion" => Ok(StressKind::TailExplosion),
            "valley_vanish" => Ok(StressKind::ValleyVanish),
            "rounding_shift" => Ok(StressKind::RoundingShift),
            other => Err(Error::config(format!("unknown stress kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressEvent {
    pub kind: StressKind,
    pub start: u64,
    pub duration: u64,
    /// Surge weight, peak merge fraction, or the coarse step; a default per
    /// kind applies when absent.
    #[serde(default)]
    pub magnitude: Option<f64>,
}

impl StressEvent {
    pub fn is_active(&self, t: u64) -> bool {
        t >= self.start && t < self.start + self.duration
    }

    fn magnitude(&self) -> f64 {
        self.magnitude.unwrap_or(match self.kind {
            StressKind::TailExplosion => 0.3,
            StressKind::ValleyVanish => 1.0,
            StressKind::RoundingShift => 0.05,
        })
    }

    /// Triangle ramp: 0 at the ends of the event, 1 at its midpoint.
    fn ramp(&self, t: u64) -> f64 {
        if !self.is_active(t) || self.duration == 0 {
            return 0.0;
        }
        let pos = (t - self.start) as f64 + 0.5;
        let half = self.duration as f64 / 2.0;
        (1.0 - (pos - half).abs() / half).clamp(0.0, 1.0)
    }
}

/// Temporary multiplicative change of the capacity target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start: u64,
    pub duration: u64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySchedule {
    /// Escalation intake ratio.
    pub kappa_up: f64,
    /// Escalation plus Standard ratio (two-cut mode).
    #[serde(default)]
    pub kappa_up_std: Option<f64>,
    #[serde(default)]
    pub bursts: Vec<Burst>,
}

impl CapacitySchedule {
    pub fn factor(&self, t: u64) -> f64 {
        self.bursts
            .iter()
            .filter(|b| t >= b.start && t < b.start + b.duration)
            .map(|b| b.factor)
            .product()
    }
}

/// Synthetic score stream for one business activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BAStreamProfile {
    pub name: String,
    pub components: Vec<BetaComponent>,
    #[serde(default)]
    pub drift: Vec<Keyframe>,
    #[serde(default)]
    pub seasonality: Option<Seasonality>,
    /// 0 for continuous scores.
    #[serde(default)]
    pub discretization_step: f64,
    #[serde(default)]
    pub regime_shifts: Vec<RegimeShift>,
    #[serde(default)]
    pub stress: Vec<StressEvent>,
    /// Events per interval.
    pub rate: u64,
    pub capacity: CapacitySchedule,
    #[serde(default)]
    pub seed: u64,
}

impl BAStreamProfile {
    pub fn validate(&self) -> Result<()> {
        check_components(&self.components, &self.name)?;
        for k in &self.drift {
            check_components(&k.components, &self.name)?;
            if k.components.len() != self.components.len() {
                return Err(Error::config(format!(
                    "{}: drift keyframe at {} has a different component count",
                    self.name, k.at
                )));
            }
        }
        if self.drift.windows(2).any(|w| w[1].at <= w[0].at) {
            return Err(Error::config(format!(
                "{}: drift keyframes must be increasing",
                self.name
            )));
        }
        for r in &self.regime_shifts {
            check_components(&r.components, &self.name)?;
        }
        if !(0.0..=0.5).contains(&self.discretization_step) {
            return Err(Error::config(format!(
                "{}: discretization_step must lie in [0, 0.5]",
                self.name
            )));
        }
        if let Some(s) = self.seasonality {
            if !(0.0..1.0).contains(&s.amplitude) || s.period == 0 {
                return Err(Error::config(format!(
                    "{}: seasonality needs amplitude in [0, 1) and period >= 1",
                    self.name
                )));
            }
        }
        let c = &self.capacity;
        if !(c.kappa_up > 0.0 && c.kappa_up < 1.0) {
            return Err(Error::config(format!(
                "{}: capacity.kappa_up outside (0, 1)",
                self.name
            )));
        }
        if let Some(k) = c.kappa_up_std {
            if !(k >= c.kappa_up && k < 1.0) {
                return Err(Error::config(format!(
                    "{}: capacity.kappa_up_std must lie in [kappa_up, 1)",
                    self.name
                )));
            }
        }
        if c.bursts.iter().any(|b| !(b.factor > 0.0)) {
            return Err(Error::config(format!("{}: burst factors must be positive", self.name)));
        }
        if self.rate == 0 {
            return Err(Error::config(format!("{}: rate must be positive", self.name)));
        }
        Ok(())
    }

    /// Normalized mixture at interval `t` after drift, regime shifts,
    /// seasonality and stress events.
    pub fn mixture_at(&self, t: u64) -> Vec<BetaComponent> {
        let mut comps = match self.regime_shifts.iter().filter(|r| r.at <= t).max_by_key(|r| r.at) {
            Some(r) => r.components.clone(),
            None => self.drifted(t),
        };
        if let Some(s) = self.seasonality {
            let k = comps.len() as f64;
            for (i, c) in comps.iter_mut().enumerate() {
                let phase = 2.0 * PI * (t as f64 / s.period as f64 + i as f64 / k);
                c.weight *= 1.0 + s.amplitude * phase.sin();
            }
        }
        normalize(&mut comps);
        for e in self.stress.iter().filter(|e| e.is_active(t)) {
            match e.kind {
                StressKind::TailExplosion => {
                    let w = e.magnitude().clamp(0.0, 1.0);
                    comps.iter_mut().for_each(|c| c.weight *= 1.0 - w);
                    comps.push(BetaComponent::new(20.0, 2.0, w));
                }
                StressKind::ValleyVanish => merge_means(&mut comps, e.magnitude() * e.ramp(t)),
                StressKind::RoundingShift => {}
            }
        }
        normalize(&mut comps);
        comps
    }

    /// Rounding step at interval `t` (coarsened during rounding shifts).
    pub fn step_at(&self, t: u64) -> f64 {
        self.stress
            .iter()
            .filter(|e| e.kind == StressKind::RoundingShift && e.is_active(t))
            .map(|e| e.magnitude())
            .fold(self.discretization_step, f64::max)
    }

    /// Escalation target count for interval `t`.
    pub fn capacity_up(&self, t: u64) -> f64 {
        self.capacity.kappa_up * self.rate as f64 * self.capacity.factor(t)
    }

    /// Standard target count for interval `t` (0 in single-cut mode).
    pub fn capacity_std(&self, t: u64) -> f64 {
        self.capacity.kappa_up_std.map_or(0.0, |k| {
            (k - self.capacity.kappa_up) * self.rate as f64 * self.capacity.factor(t)
        })
    }

    /// Returns a copy with one more stress event.
    pub fn with_stress(&self, kind: &str, start: u64, duration: u64) -> Result<Self> {
        let kind: StressKind = kind.parse()?;
        let mut p = self.clone();
        p.stress.push(StressEvent {
            kind,
            start,
            duration,
            magnitude: None,
        });
        Ok(p)
    }

    fn drifted(&self, t: u64) -> Vec<BetaComponent> {
        let Some(first) = self.drift.first() else {
            return self.components.clone();
        };
        let mut prev = Keyframe {
            at: 0,
            components: self.components.clone(),
        };
        if first.at == 0 {
            prev = first.clone();
        }
        for k in &self.drift {
            if t < k.at {
                let span = (k.at - prev.at) as f64;
                let w = (t - prev.at) as f64 / span;
                return prev
                    .components
                    .iter()
                    .zip(&k.components)
                    .map(|(a, b)| BetaComponent {
                        alpha: a.alpha + w * (b.alpha - a.alpha),
                        beta: a.beta + w * (b.beta - a.beta),
                        weight: a.weight + w * (b.weight - a.weight),
                    })
                    .collect();
            }
            prev = k.clone();
        }
        prev.components
    }
}

fn check_components(comps: &[BetaComponent], name: &str) -> Result<()> {
    if comps.is_empty() {
        return Err(Error::config(format!("{name}: mixture needs at least one component")));
    }
    if comps
        .iter()
        .any(|c| !(c.alpha > 0.0 && c.beta > 0.0 && c.weight >= 0.0))
    {
        return Err(Error::config(format!(
            "{name}: components need alpha > 0, beta > 0, weight >= 0"
        )));
    }
    if !(comps.iter().map(|c| c.weight).sum::<f64>() > 0.0) {
        return Err(Error::config(format!("{name}: component weights sum to zero")));
    }
    Ok(())
}

fn normalize(comps: &mut [BetaComponent]) {
    let s: f64 = comps.iter().map(|c| c.weight).sum();
    if s > 0.0 {
        comps.iter_mut().for_each(|c| c.weight /= s);
    }
}

/// Moves each component's mean a fraction `lambda` toward the weighted
/// common mean, keeping its concentration `α + β`.
fn merge_means(comps: &mut [BetaComponent], lambda: f64) {
    let target: f64 = comps.iter().map(|c| c.weight * c.mean()).sum();
    for c in comps.iter_mut() {
        let conc = c.alpha + c.beta;
        let m = c.mean() + lambda * (target - c.mean());
        c.alpha = m * conc;
        c.beta = (1.0 - m) * conc;
    }
}

/// The three reference shapes: unimodal skewed, bimodal with a valley at
/// 0.5, and trimodal with a crowded upper tail.
pub fn builtin_profiles() -> [BAStreamProfile; 3] {
    let preset = |name: &str, components: Vec<BetaComponent>| BAStreamProfile {
        name: name.to_string(),
        components,
        drift: Vec::new(),
        seasonality: None,
        discretization_step: 0.0,
        regime_shifts: Vec::new(),
        stress: Vec::new(),
        rate: 1000,
        capacity: CapacitySchedule {
            kappa_up: 0.05,
            kappa_up_std: None,
            bursts: Vec::new(),
        },
        seed: 0,
    };
    [
        preset("unimodal", vec![BetaComponent::new(2.0, 5.0, 1.0)]),
        preset(
            "bimodal",
            vec![BetaComponent::new(2.0, 8.0, 0.5), BetaComponent::new(8.0, 2.0, 0.5)],
        ),
        preset(
            "trimodal",
            vec![
                BetaComponent::new(2.0, 10.0, 0.6),
                BetaComponent::new(14.0, 6.0, 0.25),
                BetaComponent::new(40.0, 3.0, 0.15),
            ],
        ),
    ]
}

/// Preset by name.
pub fn builtin_profile(name: &str) -> Result<BAStreamProfile> {
    builtin_profiles()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::config(format!("unknown preset `{name}`")))
}

/// Interior valleys of the trimodal preset (numerically located).
pub const TRIMODAL_VALLEYS: [f64; 2] = [0.465_9, 0.850_25];
