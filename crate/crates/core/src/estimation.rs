//! Reconstruction of the Wigner covariance from homodyne and heterodyne records.
//!
//! Homodyne records are reduced to per-angle variances `v_theta`, which
//! follow the linear model
//!
//! ```text
//! sigma^2_theta = a0 + a1 cos(2 theta) + a2 sin(2 theta)
//! a0 = (g11 + g22) / 2,  a1 = (g11 - g22) / 2,  a2 = g12
//! ```
//!
//! The maximum-likelihood fit maximizes the exact scaled chi-square
//! likelihood of the `v_theta` by Fisher scoring, which for this model is an
//! iteratively reweighted least-squares loop. Heterodyne records give the
//! sample covariance directly. Both paths then undo the detection noise and
//! project onto the positive semidefinite cone.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::gaussian::{fold_half_turn, CovMat, DetectionModel, StateSpec, SINGULAR_DET_TOL};
use crate::linalg::{solve3, Mat3};
use crate::sampling::{HeterodyneDataset, HomodyneDataset};
use crate::stats::{HeterodyneStats, HomodyneStats};

pub const ML_REL_TOL: f64 = 1e-10;
pub const ML_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Hom,
    Het,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Hom => "hom",
            Scheme::Het => "het",
        })
    }
}

impl FromStr for Scheme {
    type Err = TomoError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hom" | "homodyne" => Ok(Scheme::Hom),
            "het" | "heterodyne" => Ok(Scheme::Het),
            other => Err(TomoError::UnknownScheme(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub psd_clipped: bool,
    /// Per-angle sample variances (homodyne only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_angle_variances: Option<Vec<f64>>,
    /// Log-likelihood at the solution, without the data-only constant.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub g_w_hat: CovMat,
    pub scheme: Scheme,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    /// Turns a capped-out ML run into an error.
    pub fn require_converged(self) -> Result<Self> {
        if self.diagnostics.converged {
            Ok(self)
        } else {
            Err(TomoError::NotConverged {
                iterations: self.diagnostics.iterations,
            })
        }
    }

    pub fn params(&self) -> Result<StateSpec> {
        extract_params(&self.g_w_hat)
    }
}

fn design_row(theta: f64) -> [f64; 3] {
    let (s, c) = (2.0 * theta).sin_cos();
    [1.0, c, s]
}

fn model_variance(a: &[f64; 3], row: &[f64; 3]) -> f64 {
    a[0] * row[0] + a[1] * row[1] + a[2] * row[2]
}

fn coeffs_to_cov(a: &[f64; 3]) -> CovMat {
    CovMat::new(a[0] + a[1], a[2], a[0] - a[1])
}

/// Number of angles distinct modulo pi.
pub fn distinct_angles_mod_pi(angles: &[f64]) -> usize {
    const TOL: f64 = 1e-9;
    let mut folded: Vec<f64> = angles.iter().map(|&a| fold_half_turn(a)).collect();
    folded.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = Vec::new();
    for a in folded {
        if distinct.last().map_or(true, |&l| a - l > TOL) {
            distinct.push(a);
        }
    }
    // 0 and pi - tiny are the same direction
    if distinct.len() > 1 && PI - distinct[distinct.len() - 1] + distinct[0] <= TOL {
        distinct.pop();
    }
    distinct.len()
}

fn check_homodyne(stats: &HomodyneStats) -> Result<Vec<f64>> {
    let distinct = distinct_angles_mod_pi(&stats.angles);
    if distinct < 3 {
        return Err(TomoError::Underdetermined { distinct });
    }
    if let Some(&n) = stats.counts.iter().min() {
        if n < 2 {
            return Err(TomoError::TooFewSamples { got: n, need: 2 });
        }
    }
    let v = stats.variances();
    if let Some(&bad) = v.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(TomoError::DegenerateVariance(bad));
    }
    Ok(v)
}

/// Weighted least squares for `(a0, a1, a2)` with weights `w`.
fn weighted_fit(rows: &[[f64; 3]], v: &[f64], w: &[f64]) -> Result<[f64; 3]> {
    let mut ata: Mat3 = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for ((row, &vi), &wi) in rows.iter().zip(v).zip(w) {
        for i in 0..3 {
            atb[i] += wi * row[i] * vi;
            for j in 0..3 {
                ata[i][j] += wi * row[i] * row[j];
            }
        }
    }
    let distinct = rows.len();
    solve3(&ata, &atb).ok_or(TomoError::Underdetermined { distinct })
}

fn log_likelihood(rows: &[[f64; 3]], v: &[f64], counts: &[usize], a: &[f64; 3]) -> Option<f64> {
    let mut ll = 0.0;
    for ((row, &vi), &n) in rows.iter().zip(v).zip(counts) {
        let s2 = model_variance(a, row);
        if !(s2 > 0.0) {
            return None;
        }
        ll -= 0.5 * n as f64 * (s2.ln() + vi / s2);
    }
    Some(ll)
}

fn finish(
    g_hom: CovMat,
    det: &DetectionModel,
    scheme: Scheme,
    excess: f64,
    mut diagnostics: Diagnostics,
) -> EstimateResult {
    let raw = CovMat::new(
        g_hom.g11 - excess - det.g_elec.g11,
        g_hom.g12 - det.g_elec.g12,
        g_hom.g22 - excess - det.g_elec.g22,
    );
    let (g_w_hat, clipped) = psd_project(&raw);
    diagnostics.psd_clipped = clipped;
    EstimateResult {
        g_w_hat,
        scheme,
        diagnostics,
    }
}

/// Weighted least-squares homodyne estimate from sufficient statistics.
pub fn estimate_homodyne_wls_stats(
    stats: &HomodyneStats,
    det: &DetectionModel,
) -> Result<EstimateResult> {
    let v = check_homodyne(stats)?;
    let rows: Vec<[f64; 3]> = stats.angles.iter().map(|&t| design_row(t)).collect();
    let w: Vec<f64> = v
        .iter()
        .zip(&stats.counts)
        .map(|(&vi, &n)| n as f64 / (2.0 * vi * vi))
        .collect();
    let a = weighted_fit(&rows, &v, &w)?;
    let ll = log_likelihood(&rows, &v, &stats.counts, &a).unwrap_or(f64::NEG_INFINITY);
    Ok(finish(
        coeffs_to_cov(&a),
        det,
        Scheme::Hom,
        det.homodyne_excess(),
        Diagnostics {
            iterations: 0,
            converged: true,
            psd_clipped: false,
            per_angle_variances: Some(v),
            log_likelihood: ll,
        },
    ))
}

pub fn estimate_homodyne_wls(d: &HomodyneDataset, det: &DetectionModel) -> Result<EstimateResult> {
    estimate_homodyne_wls_stats(&d.stats(), det)
}

/// Maximum-likelihood homodyne estimate from sufficient statistics.
///
/// Hitting the iteration cap is not an error here: the result comes back
/// with `converged = false`. Use [`EstimateResult::require_converged`] to
/// turn that into [`TomoError::NotConverged`].
pub fn estimate_homodyne_ml_stats(
    stats: &HomodyneStats,
    det: &DetectionModel,
) -> Result<EstimateResult> {
    let v = check_homodyne(stats)?;
    let rows: Vec<[f64; 3]> = stats.angles.iter().map(|&t| design_row(t)).collect();
    let counts = &stats.counts;

    let wls_w: Vec<f64> = v
        .iter()
        .zip(counts)
        .map(|(&vi, &n)| n as f64 / (2.0 * vi * vi))
        .collect();
    let mut a = weighted_fit(&rows, &v, &wls_w)?;
    let mut ll = match log_likelihood(&rows, &v, counts, &a) {
        Some(ll) => ll,
        None => {
            // WLS start leaves the admissible region; restart isotropic
            let total: usize = counts.iter().sum();
            let mean = v
                .iter()
                .zip(counts)
                .map(|(vi, &n)| vi * n as f64)
                .sum::<f64>()
                / total as f64;
            a = [mean, 0.0, 0.0];
            log_likelihood(&rows, &v, counts, &a).ok_or(TomoError::DegenerateVariance(mean))?
        }
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < ML_MAX_ITER {
        iterations += 1;
        // Fisher scoring: reweight by the current model variances
        let w: Vec<f64> = rows
            .iter()
            .zip(counts)
            .map(|(row, &n)| {
                let s2 = model_variance(&a, row);
                n as f64 / (2.0 * s2 * s2)
            })
            .collect();
        let target = weighted_fit(&rows, &v, &w)?;
        let mut step = 1.0;
        let (next, next_ll) = loop {
            let cand = [
                a[0] + step * (target[0] - a[0]),
                a[1] + step * (target[1] - a[1]),
                a[2] + step * (target[2] - a[2]),
            ];
            match log_likelihood(&rows, &v, counts, &cand) {
                Some(l) if l >= ll - 1e-12 * ll.abs() => break (cand, l),
                _ if step < 1e-10 => break (a, ll),
                _ => step *= 0.5,
            }
        };
        let change = (next_ll - ll).abs();
        a = next;
        let prev = ll;
        ll = next_ll;
        if change <= ML_REL_TOL * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(finish(
        coeffs_to_cov(&a),
        det,
        Scheme::Hom,
        det.homodyne_excess(),
        Diagnostics {
            iterations,
            converged,
            psd_clipped: false,
            per_angle_variances: Some(v),
            log_likelihood: ll,
        },
    ))
}

pub fn estimate_homodyne_ml(d: &HomodyneDataset, det: &DetectionModel) -> Result<EstimateResult> {
    estimate_homodyne_ml_stats(&d.stats(), det)
}

/// Heterodyne estimate: zero-mean sample covariance minus detection noise.
pub fn estimate_heterodyne_stats(
    stats: &HeterodyneStats,
    det: &DetectionModel,
) -> Result<EstimateResult> {
    if stats.n < 2 {
        return Err(TomoError::TooFewSamples {
            got: stats.n,
            need: 2,
        });
    }
    let n = stats.n as f64;
    let s = CovMat::new(stats.sxx / n, stats.sxp / n, stats.spp / n);
    let det_s = s.det();
    let ll = if det_s > 0.0 {
        -0.5 * n * (det_s.ln() + 2.0)
    } else {
        f64::NEG_INFINITY
    };
    Ok(finish(
        s,
        det,
        Scheme::Het,
        det.heterodyne_excess(),
        Diagnostics {
            iterations: 0,
            converged: true,
            psd_clipped: false,
            per_angle_variances: None,
            log_likelihood: ll,
        },
    ))
}

pub fn estimate_heterodyne(d: &HeterodyneDataset, det: &DetectionModel) -> Result<EstimateResult> {
    estimate_heterodyne_stats(&d.stats(), det)
}

/// Clip negative eigenvalues to zero. Round-off below `1e-12` of the
/// spectral scale is not treated as negative, which keeps the map idempotent.
pub fn psd_project(g: &CovMat) -> (CovMat, bool) {
    let (e1, e2) = g.eigenvalues();
    let tol = 1e-12 * e2.abs().max(e1.abs()).max(1.0);
    if e1 >= -tol {
        return (*g, false);
    }
    let e2c = e2.max(0.0);
    let phi = g.major_axis_angle();
    let (s, c) = phi.sin_cos();
    let out = CovMat::new(e2c * c * c, e2c * c * s, e2c * s * s);
    (out, true)
}

/// Invert the `(mu, lambda, orientation)` parametrization.
///
/// Reports `lambda >= 1` with `orientation` the angle of the major axis in
/// `[0, pi)`. Since `wigner_cov` places the major axis at
/// `orientation + pi/2`, the round trip is
/// `wigner_cov(mu, 1/lambda, orientation) == g`.
pub fn extract_params(g: &CovMat) -> Result<StateSpec> {
    let det = g.det();
    let (e1, e2) = g.eigenvalues();
    if det <= SINGULAR_DET_TOL || e1 <= 0.0 {
        return Err(TomoError::SingularMatrix { det });
    }
    Ok(StateSpec {
        mu: (e1 * e2).sqrt(),
        lambda: (e2 / e1).sqrt(),
        orientation: g.major_axis_angle(),
    })
}
