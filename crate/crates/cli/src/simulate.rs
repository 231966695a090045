//! `simulate`: every (BA × policy × seed) run of a manifest, written to disk.
//!
//! Layout of the output directory:
//!
//! ```text
//! manifest.json                      resolved manifest, hash and version
//! records/<ba>__<policy>__s<seed>.csv   one row per interval
//! decisions/<ba>__<policy>__s<seed>.jsonl   engine audit, one line per refresh
//! routing/<ba>__<policy>__s<seed>.csv   per-score routing for logged intervals
//! snapshots/<ba>__<policy>__s<seed>__t<t>.csv   density at checkpoints
//! ```
//!
//! Every CSV starts with a `# scenario_hash=...,version=...` line; JSONL files
//! start with the same fields as a JSON object.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use valleycut_core::experiment::run_stream;
use valleycut_core::{Policy, StreamRun};

use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, VERSION};

/// Environment variable capping the worker pool.
pub const WORKERS_ENV: &str = "VALLEYCUT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub stream: usize,
    pub policy: Policy,
    pub seed: u64,
}

/// Jobs in output order: stream, then policy, then seed.
pub fn jobs(m: &RunManifest) -> Vec<Job> {
    let mut out = Vec::new();
    for stream in 0..m.scenario.streams.len() {
        for &policy in &m.policies {
            for &seed in &m.seeds {
                out.push(Job { stream, policy, seed });
            }
        }
    }
    out
}

pub fn file_stem(ba: &str, policy: Policy, seed: u64) -> String {
    format!("{ba}__{policy}__s{seed}")
}

pub fn header_line(hash: &str) -> String {
    format!("# scenario_hash={hash},version={VERSION}")
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    version: &'a str,
    scenario_hash: &'a str,
    manifest: &'a RunManifest,
}

#[derive(Serialize)]
struct Provenance<'a> {
    scenario_hash: &'a str,
    version: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateSummary {
    pub runs: usize,
    pub files: usize,
    pub scenario_hash: String,
}

pub fn worker_pool() -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV}={v} is not a positive integer")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Internal(e.to_string()))
}

pub fn simulate(m: &RunManifest, out: &Path) -> CliResult<SimulateSummary> {
    m.validate()?;
    let hash = m.hash();
    let jobs = jobs(m);
    let pool = worker_pool()?;
    let runs: Vec<CliResult<StreamRun>> = pool.install(|| {
        jobs.par_iter()
            .map(|j| run_stream(&m.scenario, j.stream, j.policy, j.seed).map_err(CliError::from))
            .collect()
    });

    // single writer, in job order
    for dir in ["records", "decisions", "routing", "snapshots"] {
        let p = out.join(dir);
        fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
    }
    let mut files = 0;
    write_json(
        &out.join("manifest.json"),
        &ManifestFile {
            version: VERSION,
            scenario_hash: &hash,
            manifest: m,
        },
    )?;
    files += 1;
    for (job, run) in jobs.iter().zip(runs) {
        let run = run?;
        let ba = &m.scenario.streams[job.stream].name;
        let stem = file_stem(ba, job.policy, job.seed);
        write_csv(&out.join("records").join(format!("{stem}.csv")), &hash, &run.records)?;
        files += 1;
        if !run.decisions.is_empty() {
            let path = out.join("decisions").join(format!("{stem}.jsonl"));
            let mut w = create(&path)?;
            json_line(
                &mut w,
                &Provenance {
                    scenario_hash: &hash,
                    version: VERSION,
                },
            )?;
            for d in &run.decisions {
                json_line(&mut w, d)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
            files += 1;
        }
        if !run.routing.is_empty() {
            write_csv(&out.join("routing").join(format!("{stem}.csv")), &hash, &run.routing)?;
            files += 1;
        }
        for (t, snap) in &run.snapshots {
            let path = out.join("snapshots").join(format!("{stem}__t{t}.csv"));
            let mut w = create(&path)?;
            writeln!(w, "{}", header_line(&hash))
                .and_then(|_| snap.write_csv(&mut w))
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(&path, e))?;
            files += 1;
        }
    }
    Ok(SimulateSummary {
        runs: jobs.len(),
        files,
        scenario_hash: hash,
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Provenance comment line, then a headed CSV of `rows`.
pub(crate) fn write_csv<T: Serialize>(path: &Path, hash: &str, rows: &[T]) -> CliResult<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", header_line(hash)).map_err(|e| CliError::io(path, e))?;
    let mut c = csv::Writer::from_writer(w);
    for r in rows {
        c.serialize(r)?;
    }
    c.flush().map_err(|e| CliError::io(path, e))
}

fn json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> CliResult<()> {
    serde_json::to_writer(&mut *w, value)?;
    writeln!(w).map_err(|e| CliError::Internal(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest::from_json(
            r#"{
                "scenario": {
                    "intervals": 3,
                    "streams": [
                        { "preset": "bimodal", "rate": 300 },
                        { "preset": "unimodal", "rate": 300 },
                        { "preset": "trimodal", "rate": 300 }
                    ],
                    "snapshot_intervals": [1],
                    "routing_intervals": [2]
                },
                "policies": ["ours", "window_quantile"],
                "seeds": [1, 2, 3, 4, 5]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn job_count_is_the_product() {
        assert_eq!(jobs(&manifest()).len(), 30);
    }

    #[test]
    fn writes_one_record_file_per_run() {
        let dir = tempfile::tempdir().unwrap();
        let s = simulate(&manifest(), dir.path()).unwrap();
        assert_eq!(s.runs, 30);
        let records = fs::read_dir(dir.path().join("records")).unwrap().count();
        assert_eq!(records, 30);
        // decisions and snapshots come from the engine policy only
        assert_eq!(fs::read_dir(dir.path().join("decisions")).unwrap().count(), 15);
        assert_eq!(fs::read_dir(dir.path().join("snapshots")).unwrap().count(), 15);
        let text = fs::read_to_string(dir.path().join("records/bimodal__ours__s1.csv")).unwrap();
        assert!(text.starts_with(&format!("# scenario_hash={},version=", s.scenario_hash)));
        assert_eq!(text.lines().count(), 2 + 3);
    }
}
