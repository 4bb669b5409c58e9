//! Sufficient statistics for zero-mean Gaussian data.
//!
//! Estimators only need per-angle sums of squares (homodyne) or the
//! second-moment sums of the pairs (heterodyne). Large reference runs
//! accumulate these directly instead of materializing the samples.

use serde::{Deserialize, Serialize};

/// Chunk length shared by the samplers and the reductions below. Sums are
/// formed per chunk and then added in chunk order so that streaming and
/// materialized paths give bit-identical statistics.
pub const BATCH: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneStats {
    pub angles: Vec<f64>,
    pub counts: Vec<usize>,
    pub sum_sq: Vec<f64>,
}

impl HomodyneStats {
    pub fn from_samples(angles: &[f64], samples: &[Vec<f64>]) -> Self {
        HomodyneStats {
            angles: angles.to_vec(),
            counts: samples.iter().map(Vec::len).collect(),
            sum_sq: samples.iter().map(|s| chunked_sum_sq(s)).collect(),
        }
    }

    /// Known-zero-mean sample variance per angle.
    pub fn variances(&self) -> Vec<f64> {
        self.sum_sq
            .iter()
            .zip(&self.counts)
            .map(|(s, &n)| s / n as f64)
            .collect()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneStats {
    pub n: usize,
    pub sxx: f64,
    pub sxp: f64,
    pub spp: f64,
}

impl HeterodyneStats {
    pub fn from_pairs(pairs: &[[f64; 2]]) -> Self {
        let mut acc = HeterodyneStats::default();
        for chunk in pairs.chunks(BATCH) {
            acc.merge(&Self::accumulate(chunk));
        }
        acc
    }

    pub(crate) fn accumulate(pairs: &[[f64; 2]]) -> Self {
        let (mut sxx, mut sxp, mut spp) = (0.0, 0.0, 0.0);
        for &[x, p] in pairs {
            sxx += x * x;
            sxp += x * p;
            spp += p * p;
        }
        HeterodyneStats {
            n: pairs.len(),
            sxx,
            sxp,
            spp,
        }
    }

    pub fn merge(&mut self, other: &HeterodyneStats) {
        self.n += other.n;
        self.sxx += other.sxx;
        self.sxp += other.sxp;
        self.spp += other.spp;
    }
}

impl Default for HeterodyneStats {
    fn default() -> Self {
        HeterodyneStats {
            n: 0,
            sxx: 0.0,
            sxp: 0.0,
            spp: 0.0,
        }
    }
}

pub(crate) fn sum_sq(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum()
}

pub(crate) fn chunked_sum_sq(values: &[f64]) -> f64 {
    values.chunks(BATCH).map(sum_sq).sum()
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
