//! Goodness-of-fit battery for one-dimensional sample sets.
//!
//! The fitted Gaussian uses the sample mean and the (1/n) sample variance.
//! Histograms span the fitted mean +- 5 fitted standard deviations in
//! equal-width bins whose two outermost members are open towards +-inf.
//!
//! `ks_pvalue` comes from the asymptotic Kolmogorov distribution and
//! ignores that the parameters were fitted, so it is conservative.
//! `ks_pvalue_lilliefors` applies the Dallal-Wilkinson approximation of the
//! Lilliefors null distribution and is calibrated for fitted parameters.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Result, TomoError};

pub const DEFAULT_BINS: usize = 101;
/// Half-width of the histogram range in fitted standard deviations.
pub const RANGE_SIGMAS: f64 = 5.0;
/// Bins with fewer expected counts are merged before the chi-square test.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub ks_pvalue_lilliefors: f64,
    pub chi2_statistic: f64,
    pub chi2_dof: usize,
    pub chi2_pvalue: f64,
    /// Nats; zero-count bins contribute nothing.
    pub kl_divergence: f64,
    pub bin_count: usize,
    pub pass_95: bool,
    pub pass_99: bool,
}

impl GaussianityReport {
    /// Pass at confidence `c` iff both the KS and the chi-square p-values exceed `1 - c`.
    pub fn passes(&self, confidence: f64) -> bool {
        let alpha = 1.0 - confidence;
        self.ks_pvalue > alpha && self.chi2_pvalue > alpha
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function `P(K > x)` of the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // P(K <= x) = sqrt(2 pi)/x * sum exp(-(2k-1)^2 pi^2 / (8 x^2))
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * pi2 / (8.0 * x * x)).exp()
            })
            .sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Dallal-Wilkinson approximation to the Lilliefors p-value for a KS
/// statistic `d` computed with estimated mean and variance. Accurate below
/// 0.1, which covers the 95% and 99% decision levels; larger values are
/// capped at 1.
pub fn lilliefors_pvalue(d: f64, n: usize) -> f64 {
    let (mut d, mut n) = (d, n as f64);
    if n > 100.0 {
        d *= (n / 100.0).powf(0.49);
        n = 100.0;
    }
    let p = (-7.01256 * d * d * (n + 2.78019) + 2.99587 * d * (n + 2.78019).sqrt() - 0.122119
        + 0.974598 / n.sqrt()
        + 1.67997 / n)
        .exp();
    p.clamp(0.0, 1.0)
}

/// Probabilities of the standard normal over the histogram layout used here.
pub fn binned_gaussian_probabilities(bins: usize) -> Vec<f64> {
    let edges = inner_edges(bins);
    let mut cdf = Vec::with_capacity(bins + 1);
    cdf.push(0.0);
    cdf.extend(edges.iter().map(|&e| normal_cdf(e)));
    cdf.push(1.0);
    cdf.windows(2).map(|w| w[1] - w[0]).collect()
}

/// The `bins - 1` interior edges, in standardized units.
fn inner_edges(bins: usize) -> Vec<f64> {
    let width = 2.0 * RANGE_SIGMAS / bins as f64;
    (1..bins)
        .map(|k| -RANGE_SIGMAS + k as f64 * width)
        .collect()
}

/// `KL(p || q)` in nats, skipping bins where `p` is zero.
pub fn kl_divergence_binned(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Merge adjacent bins left to right until every group expects at least
/// [`MIN_EXPECTED`] counts. Returns `(observed, expected)` per group.
fn merge_sparse_bins(observed: &[f64], expected: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= MIN_EXPECTED {
            obs.push(o);
            exp.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(lo), Some(le)) => {
                *lo += o;
                *le += e;
            }
            _ => {
                obs.push(o);
                exp.push(e);
            }
        }
    }
    (obs, exp)
}

pub fn test_gaussianity(samples: &[f64], bins: usize) -> Result<GaussianityReport> {
    let n = samples.len();
    if bins < 4 {
        return Err(TomoError::InvalidConfig(format!(
            "need at least 4 bins, got {bins}"
        )));
    }
    if n < 10 * bins {
        return Err(TomoError::TooFewSamples {
            got: n,
            need: 10 * bins,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(TomoError::InvalidState("non-finite sample value".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if var <= 1e-24 * mean.abs().max(1.0).powi(2) {
        return Err(TomoError::DegenerateVariance(var));
    }
    let sd = var.sqrt();

    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);

    let ks_statistic = z
        .iter()
        .enumerate()
        .map(|(i, &zi)| {
            let f = normal_cdf(zi);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0f64, f64::max);
    let ks_pvalue = kolmogorov_sf(nf.sqrt() * ks_statistic);
    let ks_pvalue_lilliefors = lilliefors_pvalue(ks_statistic, n);

    let edges = inner_edges(bins);
    let mut counts = vec![0.0; bins];
    let mut k = 0;
    for &zi in &z {
        while k < edges.len() && zi >= edges[k] {
            k += 1;
        }
        counts[k] += 1.0;
    }
    let probs = binned_gaussian_probabilities(bins);
    let expected: Vec<f64> = probs.iter().map(|p| p * nf).collect();
    let (obs, exp) = merge_sparse_bins(&counts, &expected);
    let chi2_statistic: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    let chi2_dof = obs.len().saturating_sub(3).max(1);
    let chi2_pvalue = gamma_ur(chi2_dof as f64 / 2.0, chi2_statistic / 2.0).clamp(0.0, 1.0);

    let observed_p: Vec<f64> = counts.iter().map(|c| c / nf).collect();
    let kl_divergence = kl_divergence_binned(&observed_p, &probs);

    let mut report = GaussianityReport {
        n,
        mean,
        std_dev: sd,
        ks_statistic,
        ks_pvalue,
        ks_pvalue_lilliefors,
        chi2_statistic,
        chi2_dof,
        chi2_pvalue,
        kl_divergence,
        bin_count: bins,
        pass_95: false,
        pass_99: false,
    };
    report.pass_95 = report.passes(0.95);
    report.pass_99 = report.passes(0.99);
    Ok(report)
}
