//! Fixtures shared by the criterion benches.

use valleycut_core::simgen::generate_interval;
use valleycut_core::{builtin_profile, CapacityTarget, DensityConfig, Engine, EngineConfig, EstimatorMode};

/// `n` scores from a built-in preset, fixed seed.
pub fn scores(preset: &str, n: usize) -> Vec<f64> {
    let mut p = builtin_profile(preset).expect("built-in preset");
    p.rate = 1000;
    (0..n.div_ceil(1000) as u64)
        .flat_map(|t| generate_interval(&p, 7, t))
        .take(n)
        .collect()
}

/// Forgetting-mode density settings at grid size `g`.
pub fn density_config(g: usize, refresh_every: u64) -> DensityConfig {
    DensityConfig {
        grid_size: g,
        mode: EstimatorMode::ExponentialForgetting { alpha: 1e-3 },
        refresh_every,
        ..DensityConfig::default()
    }
}

/// An engine that has already seen `n` scores of `preset`.
pub fn warmed_engine(preset: &str, n: usize) -> Engine {
    let config = EngineConfig {
        density: density_config(512, 500),
        ..EngineConfig::default()
    };
    let mut e = Engine::new(config).expect("valid engine config");
    scores(preset, n).into_iter().for_each(|s| e.ingest(s));
    e
}

pub fn target(n: f64) -> CapacityTarget {
    CapacityTarget {
        kappa_up: 0.05,
        kappa_up_std: None,
        delta: 0.1 * 0.05 * n,
        count_basis: n,
    }
}
