//! Operational metrics computed from interval records.
//!
//! Quantiles use linear interpolation between order statistics with inclusive
//! endpoints: position `q (n - 1)` in the sorted sample.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stream's outcome for one interval under one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub ba: String,
    pub policy: String,
    pub seed: u64,
    pub interval_id: u64,
    /// Scores that arrived.
    pub arrivals: u64,
    /// Realized Escalation intake `A_t`.
    pub alerts: u64,
    /// Target `C_t`.
    pub target: f64,
    /// Cases routed to Escalation, before trim and capacity.
    pub routed_up: u64,
    pub routed_std: u64,
    pub taken_std: u64,
    pub target_std: f64,
    pub cut_up: f64,
    pub trim_up: f64,
    pub cut_std: Option<f64>,
    pub trim_std: Option<f64>,
    /// Capacity-true cut behind the deployed escalation cut.
    pub t_star: f64,
    pub elasticity_up: f64,
    pub anchored_up: bool,
    pub anchored_std: Option<bool>,
    /// `B_t` after this interval.
    pub backlog: f64,
    /// Scores sitting exactly on a current or previous cut.
    pub tie_atoms: u64,
    /// Of those, scores whose queue differs between the two cut sets.
    pub tie_flips: u64,
    /// Grid cells written by density updates during the interval.
    pub update_ops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdherenceSummary {
    pub mean_abs: f64,
    pub mean_rel: f64,
    pub within: f64,
    pub tolerance: f64,
}

/// Mean `|A - C|`, mean `|A - C| / C` and the fraction of intervals with
/// relative deviation at most `tolerance`.
pub fn adherence_summary(records: &[IntervalRecord], tolerance: f64) -> Result<AdherenceSummary> {
    adherence_of(records.iter().map(|r| (r.alerts as f64, r.target)), tolerance)
}

pub fn adherence_of<I>(pairs: I, tolerance: f64) -> Result<AdherenceSummary>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut n, mut abs, mut rel, mut within) = (0usize, 0.0, 0.0, 0usize);
    for (a, c) in pairs {
        if !(c > 0.0) {
            return Err(Error::config(format!("adherence needs positive targets, got {c}")));
        }
        let d = (a - c).abs();
        n += 1;
        abs += d;
        rel += d / c;
        // a hair of slack so that exact band edges count as inside
        within += (d / c <= tolerance + 1e-12) as usize;
    }
    if n == 0 {
        return Err(Error::Empty("adherence records"));
    }
    Ok(AdherenceSummary {
        mean_abs: abs / n as f64,
        mean_rel: rel / n as f64,
        within: within as f64 / n as f64,
        tolerance,
    })
}

/// `None` marks a statistic that is undefined for the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub intake_cov: Option<f64>,
    pub jitter: Vec<f64>,
    pub jitter_median: Option<f64>,
    pub jitter_max: Option<f64>,
    pub elasticity_median: Option<f64>,
}

/// Stability of one stream's records, ordered by interval.
pub fn stability_summary(records: &[IntervalRecord]) -> StabilitySummary {
    let alerts: Vec<f64> = records.iter().map(|r| r.alerts as f64).collect();
    let cuts: Vec<f64> = records.iter().map(|r| r.cut_up).collect();
    let el: Vec<f64> = records.iter().map(|r| r.elasticity_up).collect();
    let jitter = jitter_series(&cuts);
    StabilitySummary {
        intake_cov: coefficient_of_variation(&alerts),
        jitter_median: median(&jitter),
        jitter_max: jitter.iter().cloned().reduce(f64::max),
        jitter,
        elasticity_median: median(&el),
    }
}

/// Population standard deviation over the mean; undefined for an empty or
/// zero-mean sample.
pub fn coefficient_of_variation(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

/// `|c_t - c_{t-1}|` for consecutive cuts.
pub fn jitter_series(cuts: &[f64]) -> Vec<f64> {
    cuts.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacklogSummary {
    pub exceedance: f64,
    /// Interval ids at which a breach began.
    pub onsets: Vec<u64>,
    /// Mean gap between consecutive onsets; needs two onsets.
    pub mean_time_between_breaches: Option<f64>,
}

/// `Pr(B_t > β C_ref)` and breach onsets over one stream's records.
pub fn backlog_summary(records: &[IntervalRecord], beta: f64, c_ref: f64) -> BacklogSummary {
    backlog_of(records.iter().map(|r| (r.interval_id, r.backlog)), beta * c_ref)
}

pub fn backlog_of<I>(series: I, limit: f64) -> BacklogSummary
where
    I: IntoIterator<Item = (u64, f64)>,
{
    let (mut n, mut over) = (0usize, 0usize);
    let mut onsets = Vec::new();
    let mut breached = false;
    for (t, b) in series {
        n += 1;
        let now = b > limit;
        over += now as usize;
        if now && !breached {
            onsets.push(t);
        }
        breached = now;
    }
    let mtbb = (onsets.len() >= 2).then(|| (onsets[onsets.len() - 1] - onsets[0]) as f64 / (onsets.len() - 1) as f64);
    BacklogSummary {
        exceedance: if n == 0 { 0.0 } else { over as f64 / n as f64 },
        onsets,
        mean_time_between_breaches: mtbb,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortabilitySummary {
    /// IQR of per-BA median elasticities.
    pub elasticity_dispersion: f64,
    pub anchored_proportion: f64,
    pub tie_volatility: f64,
}

pub fn portability_summary(records: &[IntervalRecord]) -> Result<PortabilitySummary> {
    if records.is_empty() {
        return Err(Error::Empty("portability records"));
    }
    let mut by_ba: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_ba.entry(&r.ba).or_default().push(r.elasticity_up);
    }
    let medians: Vec<f64> = by_ba.values().filter_map(|v| median(v)).collect();
    let anchored = records.iter().filter(|r| r.anchored_up).count();
    let atoms: u64 = records.iter().map(|r| r.tie_atoms).sum();
    let flips: u64 = records.iter().map(|r| r.tie_flips).sum();
    Ok(PortabilitySummary {
        elasticity_dispersion: iqr(&medians).unwrap_or(0.0),
        anchored_proportion: anchored as f64 / records.len() as f64,
        tie_volatility: if atoms == 0 { 0.0 } else { flips as f64 / atoms as f64 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeProfile {
    pub grid_sizes: Vec<usize>,
    /// Median per-event time at each size, in the input's unit.
    pub medians: Vec<f64>,
    /// Least-squares slope of `ln median` on `ln G`.
    pub slope: f64,
    pub intercept: f64,
}

/// Fits per-event cost against grid size on log-log axes.
pub fn runtime_profile(samples: &[(usize, Vec<f64>)]) -> Result<RuntimeProfile> {
    let mut sizes: Vec<usize> = samples.iter().map(|s| s.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 || sizes.len() != samples.len() {
        return Err(Error::insufficient(
            "runtime profile needs timings at three or more distinct grid sizes",
        ));
    }
    let mut rows: Vec<(usize, f64)> = Vec::with_capacity(samples.len());
    for (g, t) in samples {
        let m = median(t).ok_or_else(|| Error::insufficient(format!("no timings at G = {g}")))?;
        if !(m > 0.0) {
            return Err(Error::insufficient(format!("non-positive median timing at G = {g}")));
        }
        rows.push((*g, m));
    }
    rows.sort_by_key(|r| r.0);
    let xs: Vec<f64> = rows.iter().map(|r| (r.0 as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(RuntimeProfile {
        grid_sizes: rows.iter().map(|r| r.0).collect(),
        medians: rows.iter().map(|r| r.1).collect(),
        slope,
        intercept,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Linear-interpolation quantile with inclusive endpoints.
pub fn quantile(xs: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(xs: &[f64]) -> Option<f64> {
    quantile(xs, 0.5)
}

pub fn iqr(xs: &[f64]) -> Option<f64> {
    Some(quantile(xs, 0.75)? - quantile(xs, 0.25)?)
}

/// Median and quartiles of one statistic across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSpread {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub count: usize,
}

impl SeedSpread {
    pub fn of(xs: &[f64]) -> Option<Self> {
        Some(SeedSpread {
            median: quantile(xs, 0.5)?,
            q25: quantile(xs, 0.25)?,
            q75: quantile(xs, 0.75)?,
            count: xs.iter().filter(|x| !x.is_nan()).count(),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: u64, a: u64, c: f64) -> IntervalRecord {
        IntervalRecord {
            ba: "ba".into(),
            policy: "ours".into(),
            seed: 0,
            interval_id: t,
            arrivals: 1000,
            alerts: a,
            target: c,
            routed_up: a,
            routed_std: 0,
            taken_std: 0,
            target_std: 0.0,
            cut_up: 0.8,
            trim_up: 0.8,
            cut_std: None,
            trim_std: None,
            t_star: 0.8,
            elasticity_up: 10.0,
            anchored_up: false,
            anchored_std: None,
            backlog: 0.0,
            tie_atoms: 0,
            tie_flips: 0,
            update_ops: 0,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn adherence_examples() {
        let rs = vec![rec(1, 100, 100.0), rec(2, 110, 100.0), rec(3, 90, 100.0)];
        let s = adherence_summary(&rs, 0.1).unwrap();
        assert!(close(s.mean_abs, 20.0 / 3.0));
        assert!(close(s.mean_rel, 0.2 / 3.0));
        assert_eq!(s.within, 1.0);

        let s = adherence_summary(&[rec(1, 50, 50.0), rec(2, 7, 7.0)], 0.1).unwrap();
        assert_eq!((s.mean_abs, s.mean_rel, s.within), (0.0, 0.0, 1.0));

        assert_eq!(adherence_summary(&[rec(1, 80, 100.0)], 0.1).unwrap().within, 0.0);
        assert!(matches!(adherence_summary(&[], 0.1), Err(Error::Empty(_))));
        assert!(adherence_summary(&[rec(1, 1, 0.0)], 0.1).is_err());
    }

    #[test]
    fn stability_examples() {
        let rs = vec![rec(1, 10, 10.0), rec(2, 10, 10.0), rec(3, 10, 10.0)];
        assert_eq!(stability_summary(&rs).intake_cov, Some(0.0));

        let j = jitter_series(&[0.8, 0.8, 0.85]);
        assert_eq!(j.len(), 2);
        assert_eq!(j[0], 0.0);
        assert!(close(j[1], 0.05));

        let zero = vec![rec(1, 0, 10.0), rec(2, 0, 10.0)];
        assert_eq!(stability_summary(&zero).intake_cov, None);
        assert_eq!(stability_summary(&zero[..1]).jitter_median, None);
    }

    #[test]
    fn backlog_examples() {
        let s = backlog_of((1..=10).map(|t| (t, 0.0)), 0.5 * 100.0);
        assert_eq!(s.exceedance, 0.0);
        assert_eq!(s.mean_time_between_breaches, None);

        let s = backlog_of([(1, 1.0), (2, 3.0), (3, 1.0), (4, 3.0)], 2.0);
        assert_eq!(s.exceedance, 0.5);
        assert_eq!(s.onsets, vec![2, 4]);
        assert_eq!(s.mean_time_between_breaches, Some(2.0));

        let s = backlog_of([(1, 0.0), (2, 5.0), (3, 5.0), (4, 0.0)], 2.0);
        assert_eq!(s.onsets, vec![2]);
        assert_eq!(s.mean_time_between_breaches, None);
    }

    #[test]
    fn portability_examples() {
        let mut rs: Vec<IntervalRecord> = (0..4).map(|t| rec(t, 50, 50.0)).collect();
        rs.iter_mut().for_each(|r| r.anchored_up = true);
        let p = portability_summary(&rs).unwrap();
        assert_eq!(p.anchored_proportion, 1.0);
        assert_eq!(p.elasticity_dispersion, 0.0);
        assert_eq!(p.tie_volatility, 0.0);

        rs[0].tie_atoms = 4;
        rs[0].tie_flips = 1;
        rs[1].ba = "other".into();
        rs[1].elasticity_up = 30.0;
        let p = portability_summary(&rs).unwrap();
        assert_eq!(p.tie_volatility, 0.25);
        // medians 10 and 30: quartiles at 15 and 25
        assert!(close(p.elasticity_dispersion, 10.0));
    }

    #[test]
    fn runtime_fit_examples() {
        let lin: Vec<(usize, Vec<f64>)> = [128, 512, 2048]
            .iter()
            .map(|&g| (g, vec![3e-9 * g as f64; 5]))
            .collect();
        assert!((runtime_profile(&lin).unwrap().slope - 1.0).abs() < 0.05);
        let flat: Vec<(usize, Vec<f64>)> = [128, 512, 2048].iter().map(|&g| (g, vec![1e-6; 5])).collect();
        assert!(runtime_profile(&flat).unwrap().slope.abs() < 1e-9);
        assert!(matches!(runtime_profile(&lin[..2]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn quantile_convention() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), Some(1.0));
        assert_eq!(quantile(&xs, 1.0), Some(4.0));
        assert_eq!(median(&xs), Some(2.5));
        assert_eq!(quantile(&xs, 0.25), Some(1.75));
        assert_eq!(iqr(&xs), Some(1.5));
        assert_eq!(median(&[]), None);
    }

    proptest! {
        #[test]
        fn quantile_is_monotone_and_bounded(xs in prop::collection::vec(-1e3f64..1e3, 1..50),
                                             a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ql = quantile(&xs, lo).unwrap();
            let qh = quantile(&xs, hi).unwrap();
            prop_assert!(ql <= qh);
            let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(ql >= min && qh <= max);
        }

        #[test]
        fn adherence_fraction_in_unit_interval(pairs in prop::collection::vec((0u64..200, 1.0f64..200.0), 1..40)) {
            let s = adherence_of(pairs.iter().map(|&(a, c)| (a as f64, c)), 0.1).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.within));
            prop_assert!(s.mean_abs >= 0.0 && s.mean_rel >= 0.0);
        }
    }
}
