//! Comparisons of ensembles with each other and with the closed form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EnsembleResult;
use crate::diagram::{closed_form_c2, linear_c2};
use crate::kraus::SimParams;

/// `dev / se`, with `0/0 = 0` and `x/0 = ∞`.
fn z_score(dev: f64, se: f64) -> f64 {
    if se > 0.0 {
        dev / se
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub times: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub linear: Vec<f64>,
    /// `|mean_c2 − closed_form_c2|`.
    pub deviation: Vec<f64>,
    pub z: Vec<f64>,
    pub linear_deviation: Vec<f64>,
    pub max_deviation: f64,
    pub max_z: f64,
    pub max_linear_deviation: f64,
    /// Whether `|dev| < max(3 se, band)` at every time.
    pub within_band: bool,
    pub band: f64,
}

pub const DEFAULT_DEVIATION_BAND: f64 = 0.02;

pub fn compare_to_closed_form(ens: &EnsembleResult, params: &SimParams) -> DeviationReport {
    compare_to_closed_form_with(ens, params, DEFAULT_DEVIATION_BAND)
}

pub fn compare_to_closed_form_with(ens: &EnsembleResult, params: &SimParams, band: f64) -> DeviationReport {
    let n = ens.times.len();
    let se = |i: usize| ens.stderr.as_ref().map_or(0.0, |s| s[i]);
    let closed: Vec<f64> = ens.times.iter().map(|&t| closed_form_c2(t, params)).collect();
    let linear: Vec<f64> = ens.times.iter().map(|&t| linear_c2(t, params)).collect();
    let deviation: Vec<f64> = (0..n).map(|i| (ens.mean_c2[i] - closed[i]).abs()).collect();
    let linear_deviation: Vec<f64> = (0..n).map(|i| (ens.mean_c2[i] - linear[i]).abs()).collect();
    let z: Vec<f64> = (0..n).map(|i| z_score(deviation[i], se(i))).collect();
    let within_band = (0..n).all(|i| deviation[i] < (3.0 * se(i)).max(band));
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    DeviationReport {
        max_deviation: max(&deviation),
        max_z: max(&z),
        max_linear_deviation: max(&linear_deviation),
        times: ens.times.clone(),
        closed_form: closed,
        linear,
        deviation,
        z,
        linear_deviation,
        within_band,
        band,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

impl KsResult {
    /// Whether equality of the distributions survives at level `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n1 && j < n2 {
        let v = x[i].min(y[j]);
        while i < n1 && x[i] <= v {
            i += 1;
        }
        while j < n2 && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let p_value = if n1 == 0 || n2 == 0 {
        1.0
    } else {
        let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
        let s = ne.sqrt();
        kolmogorov_q((s + 0.12 + 0.11 / s) * d)
    };
    KsResult {
        statistic: d,
        p_value,
        n1,
        n2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub z: Vec<f64>,
    pub max_z: f64,
    pub final_ks: KsResult,
}

/// Per-time z-scores of the difference of two independent ensembles on the
/// same grid, and a KS test on their final `C²`.
pub fn compare_ensembles(a: &EnsembleResult, b: &EnsembleResult) -> EnsembleComparison {
    let n = a.times.len().min(b.times.len());
    let se = |e: &EnsembleResult, i: usize| e.stderr.as_ref().map_or(0.0, |s| s[i]);
    let z: Vec<f64> = (0..n)
        .map(|i| z_score((a.mean_c2[i] - b.mean_c2[i]).abs(), se(a, i).hypot(se(b, i))))
        .collect();
    EnsembleComparison {
        max_z: z.iter().copied().fold(0.0, f64::max),
        z,
        final_ks: ks_two_sample(&a.final_c2, &b.final_c2),
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation.
pub(crate) fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Bootstrap standard error of the mean of independent samples.
pub fn bootstrap_se<R: Rng + ?Sized>(x: &[f64], n_resamples: usize, rng: &mut R) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).map(|_| x[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    std_dev(&means)
}

/// Moving-block bootstrap standard error of the mean of a correlated series.
pub fn moving_block_bootstrap_se<R: Rng + ?Sized>(x: &[f64], block: usize, n_resamples: usize, rng: &mut R) -> f64 {
    let n = x.len();
    let block = block.clamp(1, n.max(1));
    if n < 2 {
        return f64::NAN;
    }
    let n_blocks = n.div_ceil(block);
    let starts = n - block + 1;
    let means: Vec<f64> = (0..n_resamples)
        .map(|_| {
            let mut s = 0.0;
            let mut taken = 0;
            for _ in 0..n_blocks {
                let b = rng.random_range(0..starts);
                for v in &x[b..b + block] {
                    if taken == n {
                        break;
                    }
                    s += v;
                    taken += 1;
                }
            }
            s / n as f64
        })
        .collect();
    std_dev(&means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn kolmogorov_quantiles() {
        // Classical critical values.
        assert_abs_diff_eq!(kolmogorov_q(1.358), 0.05, epsilon = 5e-4);
        assert_abs_diff_eq!(kolmogorov_q(1.628), 0.01, epsilon = 2e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_detects_shift_and_accepts_same_law() {
        let mut r = stream(5, 0);
        let a: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut r)).collect();
        let b: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut r)).collect();
        let c: Vec<f64> = b.iter().map(|x: &f64| x + 0.2).collect();
        assert!(ks_two_sample(&a, &b).passes(0.01));
        assert!(!ks_two_sample(&a, &c).passes(0.01));
        let same = ks_two_sample(&a, &a);
        assert_eq!(same.statistic, 0.0);
        // ties across samples
        let t = ks_two_sample(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]);
        assert_abs_diff_eq!(t.statistic, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn bootstrap_errors() {
        let mut r = stream(9, 0);
        let x: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut r)).collect();
        let se = bootstrap_se(&x, 500, &mut r);
        assert!((se / (1.0 / 1000f64.sqrt()) - 1.0).abs() < 0.15, "{se}");
        // An AR(1) series with ρ = 0.9 has variance inflation (1+ρ)/(1−ρ) = 19.
        let mut y = vec![0.0; 20_000];
        for k in 1..y.len() {
            let e: f64 = StandardNormal.sample(&mut r);
            y[k] = 0.9 * y[k - 1] + e;
        }
        let naive = std_dev(&y) / (y.len() as f64).sqrt();
        let mbb = moving_block_bootstrap_se(&y, 200, 300, &mut r);
        assert!(mbb / naive > 3.0 && mbb / naive < 5.5, "{}", mbb / naive);
    }
}
