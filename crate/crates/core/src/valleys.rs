//! Density valleys: candidate minima, salience and persistence filters,
//! edge and support guards, and identity tracking between refreshes.

use serde::{Deserialize, Serialize};

use crate::density::{BandwidthProfile, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValleyConfig {
    /// Cuts are forbidden within this distance of 0 and 1.
    pub edge: f64,
    /// Minimum expected case count on each side of a valley.
    pub min_support: f64,
    /// Largest location change still treated as the same valley.
    pub max_drift: f64,
    /// Bandwidth multipliers, must contain 1.0.
    pub ladder: Vec<f64>,
    /// Consecutive ladder steps (including 1.0) a valley must survive.
    pub persistence_steps: usize,
    /// Salience threshold in units of the pointwise standard error.
    pub tau: f64,
    /// Grid points searched around the previous step when tracking a valley
    /// along the ladder. Widened to half the local bandwidth where that is
    /// larger, so tracking does not depend on the grid resolution.
    pub track_radius: usize,
    /// Report each valley where it sits on the coarsest curve it survives
    /// on, rather than on the deployed curve.
    pub locate_coarse: bool,
}

impl Default for ValleyConfig {
    fn default() -> Self {
        ValleyConfig {
            edge: 0.02,
            min_support: 5.0,
            max_drift: 0.05,
            ladder: vec![0.5, std::f64::consts::FRAC_1_SQRT_2, 1.0, std::f64::consts::SQRT_2, 2.0],
            persistence_steps: 3,
            tau: 1.0,
            track_radius: 3,
            locate_coarse: true,
        }
    }
}

impl ValleyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.edge) {
            return Err(Error::config(format!("valley edge {} outside [0, 0.5)", self.edge)));
        }
        if !(self.min_support >= 0.0) || !(self.max_drift >= 0.0) || !(self.tau >= 0.0) {
            return Err(Error::config("min_support, max_drift and tau must be nonnegative"));
        }
        if self.ladder.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::config("ladder multipliers must be positive"));
        }
        if !self.ladder.is_empty() && !self.ladder.contains(&1.0) {
            return Err(Error::config("ladder must contain the multiplier 1.0"));
        }
        if self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("ladder must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valley {
    pub location: f64,
    pub density_value: f64,
    pub salience: f64,
    /// Smallest and largest ladder multiplier over which the valley survives.
    pub persistence_span: (f64, f64),
    /// Mass to the neighbouring valley (or domain end) on each side.
    pub adjacent_mass: (f64, f64),
    #[serde(skip)]
    pub index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValleySet {
    pub valleys: Vec<Valley>,
    pub source_snapshot_id: u64,
}

impl ValleySet {
    pub fn locations(&self) -> Vec<f64> {
        self.valleys.iter().map(|v| v.location).collect()
    }

    pub fn len(&self) -> usize {
        self.valleys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valleys.is_empty()
    }
}

/// Grid minimum with its sub-grid location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub location: f64,
}

/// Interior grid points where the first difference turns from negative to
/// positive. Flat bottoms report their middle point; locations are refined by
/// a parabola through the three surrounding points.
pub fn detect_candidates(grid: &Grid, values: &[f64]) -> Vec<Candidate> {
    let g = values.len();
    let mut out = Vec::new();
    let mut j = 1;
    while j + 1 < g {
        if values[j] - values[j - 1] < 0.0 {
            let mut k = j;
            while k + 1 < g && values[k + 1] == values[k] {
                k += 1;
            }
            if k + 1 < g && values[k + 1] > values[k] {
                let mid = (j + k) / 2;
                let location = if j == k {
                    refine(grid, values, j)
                } else {
                    0.5 * (grid.point(j) + grid.point(k))
                };
                out.push(Candidate { index: mid, location });
            }
            j = k + 1;
        } else {
            j += 1;
        }
    }
    out
}

fn refine(grid: &Grid, v: &[f64], j: usize) -> f64 {
    let curv = v[j - 1] - 2.0 * v[j] + v[j + 1];
    let offset = if curv > 0.0 {
        (0.5 * (v[j - 1] - v[j + 1]) / curv).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    (grid.point(j) + offset * grid.spacing()).clamp(0.0, 1.0)
}

/// `min(f(u_L) - f(v), f(u_R) - f(v))`.
pub fn salience_from(left_max: f64, valley: f64, right_max: f64) -> f64 {
    (left_max - valley).min(right_max - valley)
}

/// Salience of the minimum at `j` against its bracketing maxima. On each side
/// the bracketing maximum is the highest value reached before the curve drops
/// below `f(v)` again (or the domain end). `None` when a side never rises.
pub fn compute_salience(values: &[f64], j: usize) -> Option<f64> {
    let fv = values[j];
    let left = values[..j]
        .iter()
        .rev()
        .take_while(|&&f| f >= fv)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let right = values[j + 1..]
        .iter()
        .take_while(|&&f| f >= fv)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if left > fv && right > fv {
        Some(salience_from(left, fv, right))
    } else {
        None
    }
}

/// Density re-smoothed at one ladder multiplier.
#[derive(Debug, Clone)]
pub struct LadderCurve {
    pub multiplier: f64,
    pub values: Vec<f64>,
}

/// Tracks the minimum at grid index `j` (on the multiplier-1 curve) through
/// the ladder. Accepted when it survives at least `steps` consecutive
/// multipliers including 1.0 and the next coarser one; finer smoothing alone
/// cannot confirm a feature, since noise minima sharpen as the bandwidth
/// shrinks. Also returns the surviving span.
pub fn persistence_filter(j: usize, curves: &[LadderCurve], steps: usize, radius: usize) -> (bool, Option<(f64, f64)>) {
    match persistence_track(j, curves, steps, radius) {
        Some(t) => (t.accepted, Some(t.span)),
        None => (false, None),
    }
}

struct Track {
    accepted: bool,
    span: (f64, f64),
    /// Ladder position and grid index of the minimum on the coarsest surviving curve.
    coarsest: (usize, usize),
}

fn persistence_track(j: usize, curves: &[LadderCurve], steps: usize, radius: usize) -> Option<Track> {
    let unit = curves.iter().position(|c| c.multiplier == 1.0)?;
    if !is_local_min(&curves[unit].values, j) {
        return None;
    }
    let mut lo = unit;
    let mut at = j;
    while lo > 0 {
        match track(&curves[lo - 1].values, at, radius) {
            Some(k) => {
                at = k;
                lo -= 1;
            }
            None => break,
        }
    }
    let mut hi = unit;
    let mut at = j;
    while hi + 1 < curves.len() {
        match track(&curves[hi + 1].values, at, radius) {
            Some(k) => {
                at = k;
                hi += 1;
            }
            None => break,
        }
    }
    let coarser = hi > unit || unit + 1 == curves.len();
    Some(Track {
        accepted: hi - lo + 1 >= steps && coarser,
        span: (curves[lo].multiplier, curves[hi].multiplier),
        coarsest: (hi, at),
    })
}

fn is_local_min(v: &[f64], k: usize) -> bool {
    k > 0 && k + 1 < v.len() && v[k - 1] > v[k] && v[k + 1] >= v[k]
        || k > 0 && k + 1 < v.len() && v[k - 1] >= v[k] && v[k + 1] > v[k]
}

/// Nearest local minimum of `v` within `radius` of `center`.
fn track(v: &[f64], center: usize, radius: usize) -> Option<usize> {
    let lo = center.saturating_sub(radius).max(1);
    let hi = (center + radius).min(v.len() - 2);
    (lo..=hi)
        .filter(|&k| is_local_min(v, k))
        .min_by_key(|&k| k.abs_diff(center))
}

/// Why a candidate was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoBracket,
    Salience,
    Persistence,
    Edge,
    Separation,
    Support,
}

/// One audit row per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyAudit {
    pub location: f64,
    pub density_value: f64,
    pub salience: f64,
    pub span_lo: Option<f64>,
    pub span_hi: Option<f64>,
    pub accepted: bool,
    pub reject_reason: Option<RejectReason>,
}

#[derive(Debug, Clone, Default)]
pub struct ValleyReport {
    pub set: ValleySet,
    pub audit: Vec<ValleyAudit>,
}

/// Full valley pipeline on one snapshot: candidates, salience, persistence,
/// then edge, separation and minimum-support guards. `ladder` builds the
/// persistence curves and is only called once some candidate is salient.
pub fn find_valleys<L>(
    grid: &Grid,
    values: &[f64],
    profile: &BandwidthProfile,
    n_eff: f64,
    ladder: L,
    config: &ValleyConfig,
    snapshot_id: u64,
) -> ValleyReport
where
    L: FnOnce() -> Vec<LadderCurve>,
{
    let mut ladder = Some(ladder);
    let mut curves: Vec<LadderCurve> = Vec::new();
    let mut audit = Vec::new();
    let mut kept = Vec::new();
    for c in detect_candidates(grid, values) {
        let fv = values[c.index];
        let mut row = ValleyAudit {
            location: c.location,
            density_value: fv,
            salience: 0.0,
            span_lo: None,
            span_hi: None,
            accepted: false,
            reject_reason: None,
        };
        let Some(sal) = compute_salience(values, c.index) else {
            row.reject_reason = Some(RejectReason::NoBracket);
            audit.push(row);
            continue;
        };
        row.salience = sal;
        let noise = config.tau * (fv.max(0.0) / (n_eff.max(1.0) * profile.at(c.index))).sqrt();
        if !(sal > noise) {
            row.reject_reason = Some(RejectReason::Salience);
            audit.push(row);
            continue;
        }
        if let Some(build) = ladder.take() {
            curves = build();
        }
        let radius = config
            .track_radius
            .max((0.5 * profile.at(c.index) / grid.spacing()).round() as usize);
        let track = persistence_track(c.index, &curves, config.persistence_steps, radius);
        if let Some(t) = &track {
            row.span_lo = Some(t.span.0);
            row.span_hi = Some(t.span.1);
        }
        let Some(track) = track.filter(|t| t.accepted) else {
            row.reject_reason = Some(RejectReason::Persistence);
            audit.push(row);
            continue;
        };
        let location = match track.coarsest {
            (rung, k) if config.locate_coarse && curves[rung].multiplier > 1.0 => refine(grid, &curves[rung].values, k),
            _ => c.location,
        };
        row.location = location;
        kept.push((
            audit.len(),
            Valley {
                location,
                density_value: fv,
                salience: sal,
                persistence_span: track.span,
                adjacent_mass: (0.0, 0.0),
                index: c.index,
            },
        ));
        audit.push(row);
    }

    let rejects = apply_guards_indexed(grid, values, &mut kept, config.edge, config.min_support, n_eff);
    for (row, reason) in rejects {
        audit[row].reject_reason = Some(reason);
    }
    for (row, _) in &kept {
        audit[*row].accepted = true;
    }
    ValleyReport {
        set: ValleySet {
            valleys: kept.into_iter().map(|(_, v)| v).collect(),
            source_snapshot_id: snapshot_id,
        },
        audit,
    }
}

/// Edge, separation and minimum-support guards on an ordered valley list.
/// Support is enforced iteratively: the valley with the smallest adjacent
/// mass goes first and neighbours' masses are recomputed.
pub fn apply_guards(
    grid: &Grid,
    values: &[f64],
    valleys: Vec<Valley>,
    edge: f64,
    min_support: f64,
    n_eff: f64,
) -> ValleySet {
    let mut tagged: Vec<(usize, Valley)> = valleys.into_iter().enumerate().collect();
    apply_guards_indexed(grid, values, &mut tagged, edge, min_support, n_eff);
    ValleySet {
        valleys: tagged.into_iter().map(|(_, v)| v).collect(),
        source_snapshot_id: 0,
    }
}

fn apply_guards_indexed(
    grid: &Grid,
    values: &[f64],
    kept: &mut Vec<(usize, Valley)>,
    edge: f64,
    min_support: f64,
    n_eff: f64,
) -> Vec<(usize, RejectReason)> {
    let mut rejects = Vec::new();
    kept.retain(|(row, v)| {
        let ok = v.location >= edge && v.location <= 1.0 - edge;
        if !ok {
            rejects.push((*row, RejectReason::Edge));
        }
        ok
    });
    kept.sort_by(|a, b| a.1.location.total_cmp(&b.1.location));

    // keep the deeper of two valleys closer than two grid spacings
    let min_gap = 2.0 * grid.spacing();
    let mut i = 1;
    while i < kept.len() {
        if kept[i].1.location - kept[i - 1].1.location < min_gap {
            let drop = if kept[i].1.density_value < kept[i - 1].1.density_value {
                i - 1
            } else {
                i
            };
            rejects.push((kept[drop].0, RejectReason::Separation));
            kept.remove(drop);
        } else {
            i += 1;
        }
    }

    let tail = grid.tail_curve(values);
    let threshold = if n_eff > 0.0 {
        min_support / n_eff
    } else {
        f64::INFINITY
    };
    loop {
        let locs: Vec<f64> = kept.iter().map(|(_, v)| v.location).collect();
        let mut worst: Option<(usize, f64)> = None;
        for (i, (_, v)) in kept.iter_mut().enumerate() {
            let left_end = if i == 0 { 0.0 } else { locs[i - 1] };
            let right_end = locs.get(i + 1).copied().unwrap_or(1.0);
            let left = grid.tail_from(values, &tail, left_end) - grid.tail_from(values, &tail, v.location);
            let right = grid.tail_from(values, &tail, v.location) - grid.tail_from(values, &tail, right_end);
            v.adjacent_mass = (left, right);
            let m = left.min(right);
            if m < threshold && worst.is_none_or(|(_, w)| m < w) {
                worst = Some((i, m));
            }
        }
        match worst {
            Some((i, _)) => {
                rejects.push((kept[i].0, RejectReason::Support));
                kept.remove(i);
            }
            None => break,
        }
    }
    rejects
}

/// Outcome of matching two consecutive valley sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValleyMatching {
    /// `(previous index, current index)`.
    pub pairs: Vec<(usize, usize)>,
    pub births: Vec<usize>,
    pub deaths: Vec<usize>,
}

impl ValleyMatching {
    pub fn current_for(&self, prev: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == prev).map(|p| p.1)
    }
}

/// Greedy nearest-neighbour matching under a drift limit.
pub fn match_valleys(previous: &[f64], current: &[f64], max_drift: f64) -> ValleyMatching {
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in previous.iter().enumerate() {
        for (j, c) in current.iter().enumerate() {
            let d = (p - c).abs();
            if d <= max_drift {
                edges.push((d, i, j));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut prev_used = vec![false; previous.len()];
    let mut curr_used = vec![false; current.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in edges {
        if !prev_used[i] && !curr_used[j] {
            prev_used[i] = true;
            curr_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort();
    ValleyMatching {
        pairs,
        births: (0..current.len()).filter(|&j| !curr_used[j]).collect(),
        deaths: (0..previous.len()).filter(|&i| !prev_used[i]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{resmooth, Boundary};
    use proptest::prelude::*;
    use statrs::distribution::{Beta, Continuous};

    fn grid() -> Grid {
        Grid::new(512).unwrap()
    }

    fn mixture(grid: &Grid, parts: &[(f64, f64, f64)]) -> Vec<f64> {
        let betas: Vec<(Beta, f64)> = parts.iter().map(|&(a, b, w)| (Beta::new(a, b).unwrap(), w)).collect();
        grid.points()
            .map(|x| betas.iter().map(|(d, w)| w * d.pdf(x)).sum::<f64>())
            .collect()
    }

    fn valley(location: f64, density_value: f64) -> Valley {
        Valley {
            location,
            density_value,
            salience: 1.0,
            persistence_span: (1.0, 1.0),
            adjacent_mass: (0.0, 0.0),
            index: 0,
        }
    }

    #[test]
    fn bimodal_candidate_at_half() {
        let g = grid();
        let f = mixture(&g, &[(2.0, 8.0, 0.5), (8.0, 2.0, 0.5)]);
        let c = detect_candidates(&g, &f);
        assert_eq!(c.len(), 1);
        assert!((c[0].location - 0.5).abs() <= g.spacing());
    }

    #[test]
    fn uniform_and_unimodal_have_no_candidates() {
        let g = grid();
        assert!(detect_candidates(&g, &vec![1.0; 512]).is_empty());
        let f = mixture(&g, &[(2.0, 5.0, 1.0)]);
        // brute-force oracle: no interior sign change of the first difference
        let sign_changes = f.windows(3).filter(|w| w[1] - w[0] < 0.0 && w[2] - w[1] > 0.0).count();
        assert_eq!(sign_changes, 0);
        assert!(detect_candidates(&g, &f).is_empty());
    }

    #[test]
    fn flat_bottom_reports_middle() {
        let g = Grid::new(64).unwrap();
        let mut f = vec![2.0; 64];
        for (j, v) in f.iter_mut().enumerate() {
            *v = (j as f64 - 30.0).abs().max(2.0);
        }
        let c = detect_candidates(&g, &f);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].index, 30);
    }

    #[test]
    fn salience_examples() {
        assert!((salience_from(2.0, 0.5, 1.2) - 0.7).abs() < 1e-15);
        assert_eq!(salience_from(0.5, 0.5, 1.2), 0.0);
        let f = [2.0, 1.0, 0.5, 0.9, 1.2, 0.3];
        assert!((compute_salience(&f, 2).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(compute_salience(&[0.5, 0.5, 1.0], 1), None);
    }

    #[test]
    fn symmetric_bimodal_drops_are_equal() {
        let g = grid();
        let f = mixture(&g, &[(2.0, 8.0, 0.5), (8.0, 2.0, 0.5)]);
        let c = detect_candidates(&g, &f)[0];
        let s = compute_salience(&f, c.index).unwrap();
        let left = f[..c.index].iter().cloned().fold(0.0, f64::max) - f[c.index];
        let right = f[c.index..].iter().cloned().fold(0.0, f64::max) - f[c.index];
        assert!((left - right).abs() < 1e-9);
        assert!((s - left).abs() < 1e-12);
    }

    fn ladder_curves(g: &Grid, base: &[f64], h0: f64, ladder: &[f64]) -> Vec<LadderCurve> {
        // resmooth the analytic curve as a weighted sample at each bandwidth
        ladder
            .iter()
            .map(|&m| {
                let p = BandwidthProfile::uniform(g, h0 * m, 0.001, 1.0);
                let pts = g.points().enumerate().map(|(j, x)| (x, base[j] * g.weight(j)));
                LadderCurve {
                    multiplier: m,
                    values: resmooth(g, Boundary::Reflect, pts, &p),
                }
            })
            .collect()
    }

    #[test]
    fn bimodal_valley_persists_across_ladder() {
        let g = grid();
        let f = mixture(&g, &[(2.0, 8.0, 0.5), (8.0, 2.0, 0.5)]);
        let cfg = ValleyConfig::default();
        let curves = ladder_curves(&g, &f, 0.04, &cfg.ladder);
        let j = detect_candidates(&g, &curves[2].values)[0].index;
        let (ok, span) = persistence_filter(j, &curves, 3, 3);
        assert!(ok);
        assert_eq!(span, Some((0.5, 2.0)));
    }

    #[test]
    fn outlier_dimple_fails_persistence() {
        let g = grid();
        // unimodal bulk plus a narrow outlier cluster at 0.65
        let mut f = mixture(&g, &[(2.0, 5.0, 0.998)]);
        for (j, x) in g.points().enumerate() {
            let z = (x - 0.65) / 0.004;
            f[j] += 0.002 * (-0.5 * z * z).exp() / (0.004 * (2.0 * std::f64::consts::PI).sqrt());
        }
        let cfg = ValleyConfig::default();
        let h0 = 0.02;
        let curves = ladder_curves(&g, &f, h0, &cfg.ladder);
        let at_one = detect_candidates(&g, &curves[2].values);
        assert_eq!(at_one.len(), 1, "dimple present at the deployed bandwidth");
        assert!(detect_candidates(&g, &curves[3].values).is_empty(), "gone at 1.414");
        let (ok, span) = persistence_filter(at_one[0].index, &curves, 3, 3);
        assert!(!ok);
        assert_eq!(span, Some((0.5, 1.0)));
    }

    #[test]
    fn empty_ladder_rejects() {
        assert_eq!(persistence_filter(10, &[], 3, 3), (false, None));
    }

    #[test]
    fn config_requires_unit_multiplier() {
        let cfg = ValleyConfig {
            ladder: vec![0.5, 2.0],
            ..ValleyConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ValleyConfig::default().validate().is_ok());
    }

    #[test]
    fn guard_examples() {
        let g = grid();
        let flat = vec![1.0; 512];
        let set = apply_guards(&g, &flat, vec![valley(0.005, 1.0), valley(0.5, 1.0)], 0.02, 5.0, 1000.0);
        assert_eq!(set.locations(), vec![0.5]);
        // right-side mass 0.0005 against a threshold of 5 / 1000
        let set = apply_guards(&g, &flat, vec![valley(0.9995, 1.0)], 0.0, 5.0, 1000.0);
        assert!(set.is_empty());
        let set = apply_guards(&g, &flat, vec![valley(0.3, 1.0), valley(0.7, 1.0)], 0.02, 5.0, 1000.0);
        assert_eq!(set.len(), 2);
        assert!((set.valleys[0].adjacent_mass.0 - 0.3).abs() < 1e-9);
        assert!((set.valleys[0].adjacent_mass.1 - 0.4).abs() < 1e-9);
    }

    #[test]
    fn close_valleys_keep_the_deeper() {
        let g = grid();
        let set = apply_guards(
            &g,
            &vec![1.0; 512],
            vec![valley(0.5, 0.3), valley(0.501, 0.2)],
            0.02,
            0.0,
            1000.0,
        );
        assert_eq!(set.locations(), vec![0.501]);
    }

    #[test]
    fn matching_examples() {
        let m = match_valleys(&[0.48], &[0.50, 0.72], 0.05);
        assert_eq!(m.pairs, vec![(0, 0)]);
        assert_eq!(m.births, vec![1]);
        assert!(m.deaths.is_empty());
        let m = match_valleys(&[0.48], &[0.60], 0.05);
        assert!(m.pairs.is_empty());
        assert_eq!((m.births.clone(), m.deaths.clone()), (vec![0], vec![0]));
        let m = match_valleys(&[], &[0.5], 0.05);
        assert_eq!(m.births, vec![0]);
    }

    proptest! {
        #[test]
        fn salience_translation_invariant(vals in prop::collection::vec(0.0f64..5.0, 5..40),
                                          shift in -3.0f64..3.0) {
            let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
            for j in 1..vals.len() - 1 {
                let a = compute_salience(&vals, j);
                let b = compute_salience(&shifted, j);
                match (a, b) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                    (None, None) => {}
                    _ => {
                        // only rounding at exact ties can disagree
                    }
                }
            }
        }

        #[test]
        fn guards_are_monotone(locs in prop::collection::vec(0.0f64..1.0, 0..8),
                               edge in 0.0f64..0.1, support in 0.0f64..20.0,
                               shrink in 0.0f64..1.0) {
            let g = Grid::new(128).unwrap();
            let flat = vec![1.0; 128];
            let mut sorted = locs.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup_by(|a, b| (*a - *b).abs() < 0.02);
            let vs: Vec<Valley> = sorted.iter().map(|&l| valley(l, 1.0)).collect();
            let big = apply_guards(&g, &flat, vs.clone(), edge, support, 100.0).locations();
            let small = apply_guards(&g, &flat, vs, edge * shrink, support * shrink, 100.0).locations();
            for l in big {
                prop_assert!(small.contains(&l));
            }
        }
    }
}
