//! `bench`: per-event ingest time against grid size.

use std::time::Instant;

use valleycut_core::metrics::{runtime_profile, RuntimeProfile};
use valleycut_core::simgen::generate_interval;
use valleycut_core::{builtin_profile, DensityConfig, EstimatorMode, OnlineDensity};

use crate::error::{CliError, CliResult};

/// Events per timed batch; one timing sample is the batch mean.
const BATCH: usize = 1_000;

/// Scores for the timing loops: the bimodal preset, fixed seed.
pub fn bench_scores(events: usize) -> Vec<f64> {
    let mut p = builtin_profile("bimodal").expect("built-in preset");
    p.rate = BATCH as u64;
    (0..events.div_ceil(BATCH) as u64)
        .flat_map(|t| generate_interval(&p, 0x5eed, t))
        .take(events)
        .collect()
}

/// Density state for a timing loop. Bandwidth refreshes are switched off:
/// their cost is per refresh, not per event.
pub fn bench_density(grid_size: usize) -> CliResult<OnlineDensity> {
    let config = DensityConfig {
        grid_size,
        mode: EstimatorMode::ExponentialForgetting { alpha: 1e-3 },
        refresh_every: u64::MAX,
        ..DensityConfig::default()
    };
    Ok(OnlineDensity::new(config)?)
}

/// Per-event nanoseconds, one sample per batch, at each grid size.
pub fn time_ingest(grids: &[usize], events: usize) -> CliResult<Vec<(usize, Vec<f64>)>> {
    if events == 0 {
        return Err(CliError::Config("`--events` must be positive".into()));
    }
    if grids.len() < 3 {
        return Err(CliError::Config("`--grids` needs at least three sizes".into()));
    }
    let scores = bench_scores(events);
    let mut out = Vec::with_capacity(grids.len());
    for &g in grids {
        let mut d = bench_density(g)?;
        // untimed pass so every size starts from a populated state
        scores.iter().take(BATCH).try_for_each(|&s| d.ingest(s))?;
        let mut samples = Vec::new();
        for chunk in scores.chunks(BATCH) {
            let start = Instant::now();
            for &s in chunk {
                d.ingest(s)?;
            }
            samples.push(start.elapsed().as_nanos() as f64 / chunk.len() as f64);
        }
        out.push((g, samples));
    }
    Ok(out)
}

pub fn bench(grids: &[usize], events: usize) -> CliResult<RuntimeProfile> {
    let samples = time_ingest(grids, events)?;
    runtime_profile(&samples).map_err(|e| CliError::Config(e.to_string()))
}
