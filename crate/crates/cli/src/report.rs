//! `report`: metric tables and figure series from a `simulate` directory.
//!
//! Writes `metrics.csv` (median and quartiles over seeds per BA, policy and
//! metric) and three plot series: `intake.csv` intake against capacity with the
//! tolerance band, `cuts.csv` cut trajectories, `backlog.csv` backlog.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use valleycut_core::metrics::{
    adherence_summary, backlog_summary, median, portability_summary, stability_summary, SeedSpread,
};
use valleycut_core::IntervalRecord;

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::simulate::{file_stem, jobs, write_csv};

/// Backlog breaches are counted above this multiple of capacity.
pub const BACKLOG_BETA: f64 = 0.5;

#[derive(Deserialize)]
struct ManifestFile {
    scenario_hash: String,
    manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub ba: String,
    pub policy: String,
    pub metric: String,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub seeds: usize,
}

#[derive(Serialize)]
struct IntakeRow<'a> {
    ba: &'a str,
    policy: &'a str,
    seed: u64,
    interval_id: u64,
    alerts: u64,
    routed_up: u64,
    target: f64,
    band_lo: f64,
    band_hi: f64,
}

#[derive(Serialize)]
struct CutRow<'a> {
    ba: &'a str,
    policy: &'a str,
    seed: u64,
    interval_id: u64,
    cut_up: f64,
    trim_up: f64,
    t_star: f64,
    cut_std: Option<f64>,
    anchored_up: bool,
}

#[derive(Serialize)]
struct BacklogRow<'a> {
    ba: &'a str,
    policy: &'a str,
    seed: u64,
    interval_id: u64,
    backlog: f64,
    capacity: f64,
}

pub fn read_records(path: &Path) -> CliResult<Vec<IntervalRecord>> {
    if !path.is_file() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

fn load_manifest(dir: &Path) -> CliResult<ManifestFile> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingInput(path.clone()))?;
    serde_json::from_str(&text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

/// Steady-state statistics of one run, `None` where undefined.
pub fn run_metrics(records: &[IntervalRecord], tolerance: f64) -> Vec<(&'static str, Option<f64>)> {
    let adherence = adherence_summary(records, tolerance).ok();
    let stability = stability_summary(records);
    let targets: Vec<f64> = records.iter().map(|r| r.target).collect();
    let backlog = median(&targets).map(|c| backlog_summary(records, BACKLOG_BETA, c).exceedance);
    let portability = portability_summary(records).ok();
    let ops: Vec<f64> = records
        .iter()
        .filter(|r| r.arrivals > 0)
        .map(|r| r.update_ops as f64 / r.arrivals as f64)
        .collect();
    let jitter_mean =
        (!stability.jitter.is_empty()).then(|| stability.jitter.iter().sum::<f64>() / stability.jitter.len() as f64);
    vec![
        ("adherence_within", adherence.map(|a| a.within)),
        ("adherence_mean_rel", adherence.map(|a| a.mean_rel)),
        ("adherence_mean_abs", adherence.map(|a| a.mean_abs)),
        ("intake_cov", stability.intake_cov),
        ("jitter_median", stability.jitter_median),
        ("jitter_mean", jitter_mean),
        ("jitter_max", stability.jitter_max),
        ("elasticity_median", stability.elasticity_median),
        ("backlog_exceedance", backlog),
        ("anchored_proportion", portability.map(|p| p.anchored_proportion)),
        ("tie_volatility", portability.map(|p| p.tie_volatility)),
        ("update_ops_per_event", median(&ops)),
    ]
}

fn spread_row(ba: &str, policy: &str, metric: &str, values: &[f64]) -> MetricRow {
    let s = SeedSpread::of(values);
    MetricRow {
        ba: ba.to_string(),
        policy: policy.to_string(),
        metric: metric.to_string(),
        median: s.map(|s| s.median),
        q25: s.map(|s| s.q25),
        q75: s.map(|s| s.q75),
        seeds: s.map_or(0, |s| s.count),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub rows: Vec<MetricRow>,
}

pub fn report(input: &Path, out: &Path) -> CliResult<ReportSummary> {
    if !input.is_dir() {
        return Err(CliError::MissingInput(input.to_path_buf()));
    }
    let ManifestFile {
        scenario_hash: hash,
        manifest: m,
    } = load_manifest(input)?;
    let warmup = m.scenario.warmup;
    let tolerance = m.scenario.tolerance;

    // (ba, policy) -> metric -> per-seed values
    let mut table: BTreeMap<(usize, usize), BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    // (policy, seed) -> steady records of every BA
    let mut pooled: BTreeMap<(usize, u64), Vec<IntervalRecord>> = BTreeMap::new();
    let (mut intake, mut cuts, mut backlog) = (Vec::new(), Vec::new(), Vec::new());
    let mut all = Vec::new();
    for job in jobs(&m) {
        let ba = &m.scenario.streams[job.stream].name;
        let path = input
            .join("records")
            .join(format!("{}.csv", file_stem(ba, job.policy, job.seed)));
        let records = read_records(&path)?;
        let steady: Vec<IntervalRecord> = records.iter().filter(|r| r.interval_id >= warmup).cloned().collect();
        let p = m
            .policies
            .iter()
            .position(|&p| p == job.policy)
            .expect("job policy in manifest");
        let cell = table.entry((job.stream, p)).or_default();
        for (name, v) in run_metrics(&steady, tolerance) {
            cell.entry(name).or_default().push(v.unwrap_or(f64::NAN));
        }
        pooled.entry((p, job.seed)).or_default().extend(steady);
        all.push(records);
    }
    for records in &all {
        for r in records {
            intake.push(IntakeRow {
                ba: &r.ba,
                policy: &r.policy,
                seed: r.seed,
                interval_id: r.interval_id,
                alerts: r.alerts,
                routed_up: r.routed_up,
                target: r.target,
                band_lo: r.target * (1.0 - tolerance),
                band_hi: r.target * (1.0 + tolerance),
            });
            cuts.push(CutRow {
                ba: &r.ba,
                policy: &r.policy,
                seed: r.seed,
                interval_id: r.interval_id,
                cut_up: r.cut_up,
                trim_up: r.trim_up,
                t_star: r.t_star,
                cut_std: r.cut_std,
                anchored_up: r.anchored_up,
            });
            backlog.push(BacklogRow {
                ba: &r.ba,
                policy: &r.policy,
                seed: r.seed,
                interval_id: r.interval_id,
                backlog: r.backlog,
                capacity: r.target,
            });
        }
    }

    let mut rows = Vec::new();
    for ((stream, p), metrics) in &table {
        let ba = &m.scenario.streams[*stream].name;
        for (name, values) in metrics {
            rows.push(spread_row(ba, m.policies[*p].as_str(), name, values));
        }
    }
    for (p, policy) in m.policies.iter().enumerate() {
        let dispersion: Vec<f64> = m
            .seeds
            .iter()
            .filter_map(|s| pooled.get(&(p, *s)))
            .map(|r| portability_summary(r).map_or(f64::NAN, |x| x.elasticity_dispersion))
            .collect();
        rows.push(spread_row("all", policy.as_str(), "elasticity_dispersion", &dispersion));
    }

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_csv(&out.join("metrics.csv"), &hash, &rows)?;
    write_csv(&out.join("intake.csv"), &hash, &intake)?;
    write_csv(&out.join("cuts.csv"), &hash, &cuts)?;
    write_csv(&out.join("backlog.csv"), &hash, &backlog)?;
    Ok(ReportSummary { rows })
}

/// Looks up one table entry.
pub fn find<'a>(rows: &'a [MetricRow], ba: &str, policy: &str, metric: &str) -> Option<&'a MetricRow> {
    rows.iter()
        .find(|r| r.ba == ba && r.policy == policy && r.metric == metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(interval_id: u64, alerts: u64) -> IntervalRecord {
        IntervalRecord {
            ba: "x".into(),
            policy: "ours".into(),
            seed: 0,
            interval_id,
            arrivals: 1000,
            alerts,
            target: 50.0,
            routed_up: alerts,
            routed_std: 0,
            taken_std: 0,
            target_std: 0.0,
            cut_up: 0.9,
            trim_up: 0.9,
            cut_std: None,
            trim_std: None,
            t_star: 0.9,
            elasticity_up: 10.0,
            anchored_up: true,
            anchored_std: None,
            backlog: 0.0,
            tie_atoms: 0,
            tie_flips: 0,
            update_ops: 5000,
        }
    }

    fn value(m: &[(&str, Option<f64>)], name: &str) -> Option<f64> {
        m.iter().find(|(n, _)| *n == name).and_then(|(_, v)| *v)
    }

    #[test]
    fn exact_intake_gives_full_adherence() {
        let rs: Vec<_> = (0..10).map(|t| record(t, 50)).collect();
        let m = run_metrics(&rs, 0.1);
        assert_eq!(value(&m, "adherence_within"), Some(1.0));
        assert_eq!(value(&m, "jitter_median"), Some(0.0));
        assert_eq!(value(&m, "update_ops_per_event"), Some(5.0));
    }

    #[test]
    fn undefined_statistics_stay_empty() {
        let m = run_metrics(&[], 0.1);
        assert_eq!(value(&m, "adherence_within"), None);
        assert_eq!(value(&m, "jitter_median"), None);
        let row = spread_row("x", "ours", "jitter_median", &[f64::NAN, f64::NAN]);
        assert_eq!((row.median, row.seeds), (None, 0));
    }

    #[test]
    fn missing_directory_exits_3() {
        let err = report(Path::new("/nonexistent/run"), Path::new("/tmp/unused")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
