use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Beta as BetaSampler;
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

use super::profile::{BAStreamProfile, BetaComponent};

/// Analytic Beta mixture on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Mixture {
    parts: Vec<(Beta, f64)>,
}

impl Mixture {
    pub fn new(components: &[BetaComponent]) -> Self {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        Mixture {
            parts: components
                .iter()
                .map(|c| {
                    (
                        Beta::new(c.alpha, c.beta).expect("validated Beta parameters"),
                        c.weight / total,
                    )
                })
                .collect(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.parts.iter().map(|(d, w)| w * d.pdf(x)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.parts.iter().map(|(d, w)| w * d.cdf(x)).sum()
    }

    /// `P(X ≥ x)`.
    pub fn sf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// Interior local minima of the density on an `m`-point scan, refined by
    /// golden-section search within the bracketing cells.
    pub fn local_minima(&self, m: usize) -> Vec<f64> {
        let xs: Vec<f64> = (1..m).map(|i| i as f64 / m as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| self.pdf(x)).collect();
        let mut out = Vec::new();
        for i in 1..fs.len() - 1 {
            if fs[i] < fs[i - 1] && fs[i] <= fs[i + 1] {
                out.push(self.golden_min(xs[i - 1], xs[i + 1]));
            }
        }
        out
    }

    fn golden_min(&self, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if self.pdf(c) < self.pdf(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }
}

/// Rounds to the nearest multiple of `step`, clamped to `[0, 1]`.
pub fn discretize(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        ((x / step).round() * step).clamp(0.0, 1.0)
    } else {
        x
    }
}

/// The `rate` scores of interval `t`, a pure function of
/// `(profile, seed, t)`: ChaCha8 seeded by `seed` with stream `t`.
pub fn generate_interval(profile: &BAStreamProfile, seed: u64, t: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    let comps = profile.mixture_at(t);
    let step = profile.step_at(t);
    let pick = WeightedIndex::new(comps.iter().map(|c| c.weight)).expect("normalized weights");
    let samplers: Vec<BetaSampler<f64>> = comps
        .iter()
        .map(|c| BetaSampler::new(c.alpha, c.beta).expect("validated Beta parameters"))
        .collect();
    (0..profile.rate)
        .map(|_| {
            let k = pick.sample(&mut rng);
            discretize(samplers[k].sample(&mut rng), step)
        })
        .collect()
}
