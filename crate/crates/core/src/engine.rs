//! Per-stream loop: ingest scores, and on each refresh turn the current
//! density into deployed cuts with a full audit record.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::capacity::{
    avoid_knife_edge, detect_lattice, fine_tune, fine_tune_standard, gate_cut, select_pair, snap_single,
    CapacityTarget, DensityView, DeployedCuts, GateDecision, GateInput, GateReason, DEFAULT_ETA,
};
use crate::density::{resmooth, BandwidthProfile, DensityConfig, EstimatorMode, OnlineDensity, Snapshot};
use crate::error::{Error, Result};
use crate::valleys::{find_valleys, match_valleys, LadderCurve, ValleyAudit, ValleyConfig, ValleySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub density: DensityConfig,
    pub valleys: ValleyConfig,
    /// Fractional density reduction required before an anchored cut moves.
    pub eta: f64,
    /// Below this effective sample size refreshes hold the previous cuts.
    pub min_n_eff: f64,
    pub snapping: bool,
    pub hysteresis: bool,
    /// Shift cuts off score atoms when the stream is discretized.
    pub knife_edge: bool,
    /// Intervals between refreshes.
    pub refresh_intervals: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            density: DensityConfig {
                mode: EstimatorMode::ExponentialForgetting { alpha: 1e-3 },
                ..DensityConfig::default()
            },
            valleys: ValleyConfig::default(),
            eta: DEFAULT_ETA,
            min_n_eff: 200.0,
            snapping: true,
            hysteresis: true,
            knife_edge: true,
            refresh_intervals: 1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.density.validate()?;
        self.valleys.validate()?;
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::config(format!("eta {} outside [0, 1)", self.eta)));
        }
        if !(self.min_n_eff >= 0.0) {
            return Err(Error::config("min_n_eff must be nonnegative"));
        }
        if self.refresh_intervals == 0 {
            return Err(Error::config("refresh_intervals must be at least 1"));
        }
        Ok(())
    }
}

/// Audit record of one refresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub refresh_id: u64,
    pub event_count: u64,
    pub n_eff: f64,
    pub h0: f64,
    /// Too little data; previous cuts (or the bare quantile) kept.
    pub hold: bool,
    pub candidates: Vec<ValleyAudit>,
    pub valleys: Vec<f64>,
    pub valley_births: usize,
    pub valley_deaths: usize,
    /// Capacity-true cuts, ascending.
    pub t_star: Vec<f64>,
    /// `N · f̂(t*)` per capacity-true cut, comparable with `deployed.elasticity`.
    pub t_star_elasticity: Vec<f64>,
    /// Cuts after snapping or pair selection, before the gate.
    pub proposed: Vec<f64>,
    pub gates: Vec<GateDecision>,
    pub deployed: DeployedCuts,
    pub fine_tune: Vec<f64>,
    pub lattice: Option<f64>,
    pub tie: bool,
    /// Guardrail notes in the order they fired.
    pub guardrails: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub density: Snapshot,
    pub valleys: ValleySet,
    pub deployed: Option<DeployedCuts>,
    pub refreshes: u64,
    pub rejected: u64,
}

const LATTICE_PROBE: usize = 256;

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    density: OnlineDensity,
    recent: VecDeque<f64>,
    deployed: Option<DeployedCuts>,
    valleys: ValleySet,
    refreshes: u64,
    rejected: u64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let density = OnlineDensity::new(config.density.clone())?;
        Ok(Engine {
            config,
            density,
            recent: VecDeque::with_capacity(LATTICE_PROBE),
            deployed: None,
            valleys: ValleySet::default(),
            refreshes: 0,
            rejected: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn density(&self) -> &OnlineDensity {
        &self.density
    }

    pub fn deployed(&self) -> Option<&DeployedCuts> {
        self.deployed.as_ref()
    }

    pub fn valleys(&self) -> &ValleySet {
        &self.valleys
    }

    pub fn event_count(&self) -> u64 {
        self.density.density().event_count()
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    /// O(G) update. Scores outside `[0, 1]` are counted and otherwise ignored.
    pub fn ingest(&mut self, score: f64) {
        if self.density.ingest(score).is_err() {
            self.rejected += 1;
            return;
        }
        if self.recent.len() == LATTICE_PROBE {
            self.recent.pop_front();
        }
        self.recent.push_back(score);
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            density: self.density.snapshot(),
            valleys: self.valleys.clone(),
            deployed: self.deployed.clone(),
            refreshes: self.refreshes,
            rejected: self.rejected,
        }
    }

    /// Recomputes valleys and cuts and deploys whatever passes the gate.
    pub fn refresh(&mut self, target: &CapacityTarget) -> Result<DecisionRecord> {
        target.validate()?;
        self.refreshes += 1;
        let n_eff = self.density.n_eff();
        let mut rec = DecisionRecord {
            refresh_id: self.refreshes,
            event_count: self.event_count(),
            n_eff,
            h0: self.density.h0(),
            hold: false,
            candidates: Vec::new(),
            valleys: Vec::new(),
            valley_births: 0,
            valley_deaths: 0,
            t_star: Vec::new(),
            t_star_elasticity: Vec::new(),
            proposed: Vec::new(),
            gates: Vec::new(),
            deployed: DeployedCuts::single(0.5, 0.5),
            fine_tune: Vec::new(),
            lattice: None,
            tie: false,
            guardrails: Vec::new(),
        };
        let edge = self.config.valleys.edge;
        let view = DensityView::of(self.density.density());
        let lattice = if self.config.knife_edge {
            detect_lattice(self.recent.make_contiguous())
        } else {
            None
        };
        rec.lattice = lattice;

        if n_eff < self.config.min_n_eff {
            rec.hold = true;
            rec.guardrails.push("min_n_eff".into());
            let cuts = match &self.deployed {
                Some(d) => d.clone(),
                None => {
                    let t = clamp_edge(view.quantile(target.kappa_up)?, edge);
                    let mut d = DeployedCuts::single(t, t);
                    d.elasticity = vec![target.count_basis * view.density_at(t)];
                    rec.guardrails.push("bootstrap_quantile".into());
                    d
                }
            };
            rec.t_star = vec![view.quantile(target.kappa_up)?];
            rec.t_star_elasticity = vec![target.count_basis * view.density_at(rec.t_star[0])];
            rec.fine_tune = cuts.fine_tune_offsets();
            rec.deployed = cuts.clone();
            self.deployed = Some(cuts);
            return Ok(rec);
        }

        // valleys
        let report = if self.config.snapping {
            let grid = *self.density.grid();
            let values = view.values();
            let profile = self.density.profile();
            let boundary = self.config.density.boundary;
            let ladder = &self.config.valleys.ladder;
            let (h_min, h_max) = (self.config.density.h_min, self.config.density.h_max);
            // off-unit rungs use a fixed bandwidth: a scaled balloon profile
            // widens the valley point's own window and can fill the dip
            let build = || {
                let pts = self.density.weighted_sample();
                ladder
                    .iter()
                    .map(|&m| LadderCurve {
                        multiplier: m,
                        values: if m == 1.0 {
                            values.to_vec()
                        } else {
                            let fixed = BandwidthProfile::uniform(&grid, profile.h0 * m, h_min, h_max);
                            resmooth(&grid, boundary, pts.iter().copied(), &fixed)
                        },
                    })
                    .collect()
            };
            find_valleys(
                &grid,
                values,
                profile,
                n_eff,
                build,
                &self.config.valleys,
                self.refreshes,
            )
        } else {
            Default::default()
        };
        rec.candidates = report.audit;
        let current = report.set;
        let locs = current.locations();
        let matching = match_valleys(&self.valleys.locations(), &locs, self.config.valleys.max_drift);
        rec.valley_births = matching.births.len();
        rec.valley_deaths = matching.deaths.len();
        rec.valleys = locs.clone();

        let previous = self.deployed.clone();
        let prev_valleys = std::mem::replace(&mut self.valleys, current);
        // successor of the valley a previous cut was anchored to, if it survived
        // (a held cut keeps its old location while the valley drifts)
        let max_drift = self.config.valleys.max_drift;
        let successor = |cut: f64| -> Option<f64> {
            let (i, v) = prev_valleys
                .valleys
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1.location - cut).abs().total_cmp(&(b.1.location - cut).abs()))?;
            if (v.location - cut).abs() > max_drift {
                return None;
            }
            matching.current_for(i).map(|k| locs[k])
        };

        let deployed = match target.kappa_up_std {
            Some(k_std) if k_std > target.kappa_up => {
                self.refresh_pair(target, &view, &locs, previous.as_ref(), &successor, lattice, &mut rec)?
            }
            _ => self.refresh_single(target, &view, &locs, previous.as_ref(), &successor, lattice, &mut rec)?,
        };

        let deployed = match deployed.validate(edge) {
            Ok(()) => deployed,
            Err(e) => {
                rec.guardrails.push(format!("invalid_cuts: {e}"));
                let t = clamp_edge(rec.t_star[rec.t_star.len() - 1], edge);
                let mut d = DeployedCuts::single(t, t.max(rec.t_star[rec.t_star.len() - 1]));
                d.elasticity = vec![target.count_basis * view.density_at(t)];
                d
            }
        };
        rec.t_star_elasticity = rec
            .t_star
            .iter()
            .map(|&t| target.count_basis * view.density_at(t))
            .collect();
        rec.fine_tune = deployed.fine_tune_offsets();
        rec.deployed = deployed.clone();
        self.deployed = Some(deployed);
        Ok(rec)
    }

    #[allow(clippy::too_many_arguments)]
    fn refresh_single(
        &self,
        target: &CapacityTarget,
        view: &DensityView,
        valleys: &[f64],
        previous: Option<&DeployedCuts>,
        successor: &dyn Fn(f64) -> Option<f64>,
        lattice: Option<f64>,
        rec: &mut DecisionRecord,
    ) -> Result<DeployedCuts> {
        let kappa = target.kappa_up;
        let t_star = view.quantile(kappa)?;
        rec.t_star = vec![t_star];
        let snap = if self.config.snapping {
            snap_single(t_star, valleys, view, kappa)
        } else {
            crate::capacity::Snap {
                cut: t_star,
                anchored: false,
                tie: false,
            }
        };
        rec.tie = snap.tie;
        rec.proposed = vec![snap.cut];
        let prev = previous.map(|d| (d.escalation_cut(), *d.anchored.last().unwrap_or(&false)));
        let (cut, anchored) = self.gate(
            target,
            view,
            t_star,
            valleys,
            (snap.cut, snap.anchored),
            prev,
            successor,
            kappa,
            rec,
        );
        let (cut, anchored) = self.guard_cut(cut, anchored, t_star, view, lattice, rec);
        let mut trim = fine_tune(cut, view, kappa)?;
        if let Some(step) = lattice {
            trim = avoid_knife_edge(trim, step).max(cut);
        }
        let mut d = DeployedCuts::single(cut, trim);
        d.anchored = vec![anchored];
        d.elasticity = vec![target.count_basis * view.density_at(cut)];
        Ok(d)
    }

    #[allow(clippy::too_many_arguments)]
    fn refresh_pair(
        &self,
        target: &CapacityTarget,
        view: &DensityView,
        valleys: &[f64],
        previous: Option<&DeployedCuts>,
        successor: &dyn Fn(f64) -> Option<f64>,
        lattice: Option<f64>,
        rec: &mut DecisionRecord,
    ) -> Result<DeployedCuts> {
        let k_up = target.kappa_up;
        let k_std = target.kappa_up_std.expect("pair target");
        let admissible: &[f64] = if self.config.snapping { valleys } else { &[] };
        let choice = select_pair(admissible, view, target)?;
        rec.t_star = vec![choice.t_star_std, choice.t_star_up];
        rec.tie = choice.tie;
        let Some(c_std) = choice.c_std else {
            rec.guardrails.push("empty_standard".into());
            let mut single = self.refresh_single(target, view, valleys, previous, successor, lattice, rec)?;
            single.empty_standard = true;
            return Ok(single);
        };
        rec.proposed = vec![c_std, choice.c_up];
        let prev_pair = previous.filter(|d| d.cuts.len() == 2);
        let prev_std = prev_pair.map(|d| (d.cuts[0], d.anchored[0]));
        let prev_up = prev_pair.map(|d| (d.cuts[1], d.anchored[1]));
        let (mut lo, mut lo_anch) = self.gate(
            target,
            view,
            choice.t_star_std,
            valleys,
            (c_std, choice.anchored_std),
            prev_std,
            successor,
            k_std,
            rec,
        );
        let (mut hi, mut hi_anch) = self.gate(
            target,
            view,
            choice.t_star_up,
            valleys,
            (choice.c_up, choice.anchored_up),
            prev_up,
            successor,
            k_up,
            rec,
        );
        if !(lo < hi) {
            rec.guardrails.push("gated_pair_not_increasing".into());
            (lo, lo_anch, hi, hi_anch) = (c_std, choice.anchored_std, choice.c_up, choice.anchored_up);
        }
        let (lo, lo_anch) = self.guard_cut(lo, lo_anch, choice.t_star_std, view, lattice, rec);
        let (hi, hi_anch) = self.guard_cut(hi, hi_anch, choice.t_star_up, view, lattice, rec);
        let mut trim_up = fine_tune(hi, view, k_up)?;
        let mut trim_std = fine_tune_standard(lo, hi, view, k_std - k_up);
        if let Some(step) = lattice {
            trim_up = avoid_knife_edge(trim_up, step).max(hi);
            trim_std = avoid_knife_edge(trim_std, step).clamp(lo, hi);
        }
        let mut d = DeployedCuts::pair(lo, hi, trim_std, trim_up);
        d.anchored = vec![lo_anch, hi_anch];
        d.elasticity = vec![
            target.count_basis * view.density_at(lo),
            target.count_basis * view.density_at(hi),
        ];
        Ok(d)
    }

    /// Hysteresis for one cut. Unanchored cuts follow the quantile directly;
    /// anchored ones hold until the gate lets them move.
    #[allow(clippy::too_many_arguments)]
    fn gate(
        &self,
        target: &CapacityTarget,
        view: &DensityView,
        t_star: f64,
        valleys: &[f64],
        proposal: (f64, bool),
        previous: Option<(f64, bool)>,
        successor: &dyn Fn(f64) -> Option<f64>,
        kappa: f64,
        rec: &mut DecisionRecord,
    ) -> (f64, bool) {
        let edge = self.config.valleys.edge;
        let Some((prev, prev_anchored)) = previous else {
            rec.gates.push(GateDecision {
                cut: proposal.0,
                moved: true,
                reason: GateReason::FirstDeployment,
            });
            return proposal;
        };
        if !self.config.hysteresis || (!prev_anchored && !proposal.1) {
            rec.gates.push(GateDecision {
                cut: proposal.0,
                moved: proposal.0 != prev,
                reason: GateReason::Ungated,
            });
            return proposal;
        }
        let next = prev_anchored.then(|| successor(prev)).flatten();
        let mut invalid = Vec::new();
        if prev < edge || prev > 1.0 - edge {
            invalid.push("edge");
        }
        if view.tail_mass(prev) < kappa - target.delta / target.count_basis {
            invalid.push("under_capacity");
        }
        if prev_anchored && next.is_none() {
            invalid.push("valley_death");
        }
        if prev_anchored && view.density_at(prev) > view.density_at(t_star) {
            invalid.push("dominated_by_quantile");
        }
        for r in &invalid {
            rec.guardrails.push(format!("previous_invalid:{r}"));
        }
        // the anchor's own successor is not a competing valley for the midpoint rule
        let others: Vec<f64> = valleys.iter().copied().filter(|&v| Some(v) != next).collect();
        let d = gate_cut(GateInput {
            previous: Some(prev),
            proposed: proposal.0,
            f_previous: view.density_at(prev),
            f_proposed: view.density_at(proposal.0),
            t_star,
            valleys: &others,
            previous_invalid: !invalid.is_empty(),
            eta: self.config.eta,
        });
        rec.gates.push(d);
        if d.cut == proposal.0 {
            proposal
        } else {
            (prev, prev_anchored && next.is_some())
        }
    }

    /// Edge clamp and knife-edge shift, then drops the anchor if the final
    /// cut is denser than the quantile cut.
    fn guard_cut(
        &self,
        mut cut: f64,
        mut anchored: bool,
        t_star: f64,
        view: &DensityView,
        lattice: Option<f64>,
        rec: &mut DecisionRecord,
    ) -> (f64, bool) {
        let edge = self.config.valleys.edge;
        let clamped = clamp_edge(cut, edge);
        if clamped != cut {
            rec.guardrails.push("edge_clamp".into());
            cut = clamped;
        }
        if let Some(step) = lattice {
            let shifted = clamp_edge(avoid_knife_edge(cut, step), edge);
            if shifted != cut {
                rec.guardrails.push("knife_edge".into());
                cut = shifted;
            }
        }
        if anchored && view.density_at(cut) > view.density_at(t_star) {
            rec.guardrails.push("anchor_dropped".into());
            anchored = false;
            cut = clamp_edge(t_star, edge);
            if let Some(step) = lattice {
                cut = clamp_edge(avoid_knife_edge(cut, step), edge);
            }
        }
        (cut, anchored)
    }
}

fn clamp_edge(c: f64, edge: f64) -> f64 {
    c.clamp(edge, 1.0 - edge)
}
