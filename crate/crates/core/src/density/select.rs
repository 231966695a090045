//! Global bandwidth selection.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::{ROUGHNESS, SECOND_MOMENT};

/// `(40√π)^(1/5)`: AMISE-optimal Epanechnikov bandwidth per unit of σ under
/// a normal reference, at `n = 1`.
pub const NORMAL_SCALE_CONSTANT: f64 = 2.344_914_356_323_7;

/// Smallest sample the plug-in selector will accept.
pub const MIN_PLUG_IN_SAMPLE: usize = 100;

const BINS: usize = 1024;

/// Normal-reference bandwidth `(40√π)^(1/5) · min(σ, 1/2) · n^(-1/5)`.
///
/// No distribution on `[0, 1]` has standard deviation above 1/2, so larger
/// sample values are capped. The result is not clipped.
pub fn h0_normal_reference(n_eff: f64, sample_std: f64) -> Result<f64> {
    if !(n_eff >= 1.0) {
        return Err(Error::insufficient(format!(
            "normal-reference bandwidth needs n_eff >= 1, got {n_eff}"
        )));
    }
    let sigma = sample_std.clamp(0.0, 0.5);
    Ok(NORMAL_SCALE_CONSTANT * sigma * n_eff.powf(-0.2))
}

/// Sheather–Jones plug-in bandwidth clipped to `[h_min, h_max]`.
pub fn h0_sheather_jones(scores: &[f64], h_min: f64, h_max: f64) -> Result<f64> {
    Ok(sheather_jones(scores)?.clamp(h_min, h_max))
}

/// Two-stage direct plug-in (Sheather & Jones) for the Epanechnikov kernel.
///
/// `ψ₈` comes from a normal scale estimate, `ψ₆` and `ψ₄` from Gaussian
/// kernel functional estimates on linearly binned data, and the result is
/// `[R(K) / (μ₂(K)² ψ₄ n)]^(1/5)`.
pub fn sheather_jones(scores: &[f64]) -> Result<f64> {
    let n = scores.len();
    if n < MIN_PLUG_IN_SAMPLE {
        return Err(Error::insufficient(format!(
            "plug-in bandwidth needs at least {MIN_PLUG_IN_SAMPLE} scores, got {n}"
        )));
    }
    let binned = Binned::new(scores.iter().map(|&x| (x, 1.0)));
    plug_in(&binned, robust_scale(scores), n as f64)
}

/// Plug-in bandwidth for a weighted sample of effective size `n_eff`
/// (for individual weights, the Kish size `(Σw)² / Σw²`). Points may be
/// pre-binned, so the size cannot be recovered from them.
pub fn sheather_jones_weighted(points: &[(f64, f64)], n_eff: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    let total: f64 = pts.iter().map(|p| p.1).sum();
    if !(n_eff >= MIN_PLUG_IN_SAMPLE as f64) || pts.len() < 2 {
        return Err(Error::insufficient(format!(
            "plug-in bandwidth needs an effective sample of {MIN_PLUG_IN_SAMPLE}, got {n_eff:.1}"
        )));
    }
    let binned = Binned::new(pts.iter().copied());
    plug_in(&binned, weighted_scale(&pts, total, n_eff), n_eff)
}

fn plug_in(binned: &Binned, scale: f64, nf: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::insufficient("scores have zero spread"));
    }
    let sqrt_2pi = (2.0 * PI).sqrt();
    let psi8 = 105.0 / (32.0 * PI.sqrt() * scale.powi(9));
    let g1 = (30.0 / (sqrt_2pi * psi8 * nf)).powf(1.0 / 9.0);
    let psi6 = binned.functional(6, g1);
    if !(psi6 < 0.0) {
        return Err(Error::insufficient("degenerate sixth-derivative functional"));
    }
    let g2 = (-6.0 / (sqrt_2pi * psi6 * nf)).powf(1.0 / 7.0);
    let psi4 = binned.functional(4, g2);
    if !(psi4 > 0.0) {
        return Err(Error::insufficient("degenerate fourth-derivative functional"));
    }
    Ok((ROUGHNESS / (SECOND_MOMENT * SECOND_MOMENT * psi4 * nf)).powf(0.2))
}

/// Weighted counterpart of [`robust_scale`]; quartiles are the smallest
/// points whose cumulative weight reaches the level.
fn weighted_scale(pts: &[(f64, f64)], total: f64, n_eff: f64) -> f64 {
    let mean = pts.iter().map(|p| p.0 * p.1).sum::<f64>() / total;
    let var = pts.iter().map(|p| p.1 * (p.0 - mean).powi(2)).sum::<f64>() / total;
    let sd = (var * n_eff / (n_eff - 1.0)).sqrt();
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let q = |p: f64| {
        let want = p * total;
        let mut acc = 0.0;
        for &(x, w) in &sorted {
            acc += w;
            if acc >= want {
                return x;
            }
        }
        sorted[sorted.len() - 1].0
    };
    let iqr = (q(0.75) - q(0.25)) / 1.349;
    if iqr > 0.0 {
        sd.min(iqr)
    } else {
        sd
    }
}

/// `min(sd, IQR / 1.349)`, falling back to whichever is positive.
fn robust_scale(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(sorted.len() - 1);
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = (q(0.75) - q(0.25)) / 1.349;
    if iqr > 0.0 {
        sd.min(iqr)
    } else {
        sd
    }
}

/// Linear binning of the sample on an equispaced mesh over its range, with
/// the bin-count autocorrelation precomputed for every lag.
struct Binned {
    n: f64,
    delta: f64,
    /// `Σ_k c_k c_{k+l}` for `l = 0..M`.
    autocorr: Vec<f64>,
}

impl Binned {
    fn new<I: Iterator<Item = (f64, f64)> + Clone>(xs: I) -> Self {
        let lo = xs.clone().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = xs.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let delta = (hi - lo) / (BINS - 1) as f64;
        let mut counts = vec![0.0; BINS];
        let mut n = 0.0;
        for (x, w) in xs {
            let pos = (x - lo) / delta;
            let k = (pos.floor() as usize).min(BINS - 2);
            let t = pos - k as f64;
            counts[k] += w * (1.0 - t);
            counts[k + 1] += w * t;
            n += w;
        }
        let autocorr = (0..BINS)
            .map(|l| (0..BINS - l).map(|k| counts[k] * counts[k + l]).sum())
            .collect();
        Binned { n, delta, autocorr }
    }

    /// `ψ_r ≈ n⁻² g^-(r+1) Σ_i Σ_j φ^(r)((x_i - x_j) / g)`.
    fn functional(&self, r: u32, g: f64) -> f64 {
        let mut total = self.autocorr[0] * gauss_derivative(r, 0.0);
        for (l, &a) in self.autocorr.iter().enumerate().skip(1) {
            let u = l as f64 * self.delta / g;
            if u > 12.0 {
                break;
            }
            total += 2.0 * a * gauss_derivative(r, u);
        }
        total / (self.n * self.n * g.powi(r as i32 + 1))
    }
}

/// Even derivatives of the standard normal density.
fn gauss_derivative(r: u32, x: f64) -> f64 {
    let phi = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let x2 = x * x;
    match r {
        4 => (x2 * x2 - 6.0 * x2 + 3.0) * phi,
        6 => (x2 * x2 * x2 - 15.0 * x2 * x2 + 45.0 * x2 - 15.0) * phi,
        _ => unreachable!("only orders 4 and 6 are used"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn normal_reference_constant() {
        // (40·sqrt(pi))^(1/5) to 13 digits, computed independently
        let c = (40.0 * PI.sqrt()).powf(0.2);
        assert!((c - NORMAL_SCALE_CONSTANT).abs() < 1e-12);
        let h = h0_normal_reference(1.0, 0.2).unwrap();
        assert!((h - 0.468_982_871_264_7).abs() < 1e-9);
    }

    #[test]
    fn normal_reference_caps_sigma() {
        let capped = h0_normal_reference(100_000.0, 1.3).unwrap();
        let half = h0_normal_reference(100_000.0, 0.5).unwrap();
        assert_eq!(capped, half);
    }

    #[test]
    fn normal_reference_needs_one_sample() {
        assert!(matches!(h0_normal_reference(0.5, 0.2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn plug_in_needs_100_scores() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        assert!(matches!(sheather_jones(&xs), Err(Error::InsufficientData(_))));
    }

    fn truncated_normal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.5, 0.1).unwrap();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x: f64 = d.sample(&mut rng);
            if (0.0..=1.0).contains(&x) {
                out.push(x);
            }
        }
        out
    }

    fn normal_pdf(x: f64) -> f64 {
        let z = (x - 0.5) / 0.1;
        (-0.5 * z * z).exp() / (0.1 * (2.0 * PI).sqrt())
    }

    /// Integrated squared error of the plain Epanechnikov KDE against the
    /// generating density, on a 401-point mesh over the bulk of the support.
    fn ise(xs: &[f64], h: f64) -> f64 {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = 401;
        let (a, b) = (0.05, 0.95);
        let dx = (b - a) / (m - 1) as f64;
        let n = xs.len() as f64;
        let mut total = 0.0;
        for i in 0..m {
            let x = a + i as f64 * dx;
            let lo = sorted.partition_point(|&s| s < x - h);
            let hi = sorted.partition_point(|&s| s <= x + h);
            let f: f64 = sorted[lo..hi].iter().map(|&s| kernel::scaled(x, s, h)).sum::<f64>() / n;
            let w = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
            total += w * (f - normal_pdf(x)).powi(2);
        }
        total * dx
    }

    #[test]
    fn plug_in_tracks_ise_optimum() {
        let reps: Vec<Vec<f64>> = (0..4).map(|s| truncated_normal(10_000, 100 + s)).collect();
        let hs: Vec<f64> = (0..60).map(|i| 0.015 + i as f64 * 0.001).collect();
        let mut best = (f64::INFINITY, 0.0);
        for &h in &hs {
            let mise = reps.iter().map(|x| ise(x, h)).sum::<f64>() / reps.len() as f64;
            if mise < best.0 {
                best = (mise, h);
            }
        }
        let h_opt = best.1;
        for x in &reps {
            let h = sheather_jones(x).unwrap();
            assert!((h / h_opt - 1.0).abs() <= 0.25, "sj {h} vs ise-optimal {h_opt}");
        }
    }

    #[test]
    fn plug_in_scales_as_n_to_minus_fifth() {
        let xs = truncated_normal(10_000, 7);
        let mut doubled = xs.clone();
        doubled.extend_from_slice(&xs);
        let ratio = sheather_jones(&doubled).unwrap() / sheather_jones(&xs).unwrap();
        assert!((ratio / 2f64.powf(-0.2) - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn weighted_matches_unweighted_for_equal_weights() {
        let xs = truncated_normal(5_000, 11);
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 3.0)).collect();
        let a = sheather_jones(&xs).unwrap();
        let b = sheather_jones_weighted(&pts, xs.len() as f64).unwrap();
        assert!((a / b - 1.0).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn weighted_needs_effective_sample() {
        let pts: Vec<(f64, f64)> = (0..500).map(|i| (i as f64 / 500.0, 1.0)).collect();
        assert!(matches!(
            sheather_jones_weighted(&pts, 50.0),
            Err(Error::InsufficientData(_))
        ));
        assert!(sheather_jones_weighted(&pts, 500.0).is_ok());
    }

    #[test]
    fn binned_sample_matches_raw_sample() {
        let xs = truncated_normal(20_000, 5);
        let mut bins = vec![0.0; 512];
        xs.iter().for_each(|&x| bins[(x * 511.0).round() as usize] += 1.0);
        let pts: Vec<(f64, f64)> = bins.iter().enumerate().map(|(j, &w)| (j as f64 / 511.0, w)).collect();
        let a = sheather_jones(&xs).unwrap();
        let b = sheather_jones_weighted(&pts, xs.len() as f64).unwrap();
        assert!((a / b - 1.0).abs() < 0.03, "{a} vs {b}");
    }

    #[test]
    fn clipping_applies() {
        let xs = truncated_normal(1_000, 3);
        let h = h0_sheather_jones(&xs, 0.2, 0.25).unwrap();
        assert_eq!(h, 0.2);
    }
}
