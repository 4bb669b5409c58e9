//! Monte Carlo comparison of homodyne and heterodyne reconstruction accuracy.
//!
//! Accuracy is the Hilbert-Schmidt distance between a finite-sample
//! estimate and a reference covariance, averaged over repetitions. The
//! ratio `gamma = mean D_HS(het) / mean D_HS(hom)` is below one when
//! heterodyne detection reconstructs the state more accurately.
//!
//! The analytic ratio uses the exact second moments of the zero-mean sample
//! covariance (heterodyne) and the inverse Fisher information of the
//! quadrature-variance model (homodyne). Both errors scale as `1/N`, so the
//! ratio does not depend on the sample size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::estimation::{
    distinct_angles_mod_pi, estimate_heterodyne_stats, estimate_homodyne_ml_stats, Scheme,
};
use crate::gaussian::{
    hs_distance, marginal_variance, to_heterodyne_cov, to_homodyne_cov, wigner_cov, CovMat,
    DetectionModel, StateSpec,
};
use crate::linalg::{inverse3, Mat3};
use crate::rng::{derive_seed, tag, RNG_ALGORITHM};
use crate::sampling::{sample_heterodyne_stats, sample_homodyne_stats, AngleProtocol};
use crate::stats::mean_stderr;

/// Angle count used for estimated homodyne references.
pub const REFERENCE_ANGLES: usize = 100;

/// Minimum ratio between the reference size and the largest sample size.
pub const REFERENCE_FACTOR: usize = 100;

/// Repetitions below this count produce no empirical gamma.
pub const MIN_GAMMA_REPETITIONS: usize = 30;

pub const DEFAULT_REPETITIONS: usize = 200;

/// Offsets used when averaging the homodyne Fisher information over the
/// random protocol offset.
const OFFSET_QUADRATURE_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// Use the known simulated Wigner covariance.
    ExactTruth,
    /// Run the scheme's own pipeline at `reference_size` sampling events.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub state: StateSpec,
    pub det: DetectionModel,
    pub sample_sizes: Vec<usize>,
    pub angle_counts: Vec<usize>,
    pub repetitions: usize,
    pub reference_size: usize,
    pub reference_mode: ReferenceMode,
    pub seed: u64,
}

impl BenchmarkConfig {
    /// Desk-scale defaults: one sample size, ten angles, exact reference.
    pub fn new(state: StateSpec, sample_size: usize, seed: u64) -> Self {
        BenchmarkConfig {
            state,
            det: DetectionModel::ideal(),
            sample_sizes: vec![sample_size],
            angle_counts: vec![10],
            repetitions: DEFAULT_REPETITIONS,
            reference_size: sample_size * REFERENCE_FACTOR,
            reference_mode: ReferenceMode::ExactTruth,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TomoError::InvalidConfig(m));
        if self.sample_sizes.is_empty() {
            return bad("sample_sizes is empty".into());
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sample_sizes must be strictly increasing".into());
        }
        if self.angle_counts.is_empty() {
            return bad("angle_counts is empty".into());
        }
        for &m in &self.angle_counts {
            let distinct = AngleProtocol::new(m, 0.0)
                .map(|p| distinct_angles_mod_pi(&p.angles()))
                .unwrap_or(0);
            if distinct < 3 {
                return bad(format!(
                    "angle count {m} gives {distinct} distinct directions; need 3"
                ));
            }
            for &n in &self.sample_sizes {
                if n % m != 0 {
                    return bad(format!(
                        "sample size {n} is not divisible by angle count {m}"
                    ));
                }
                if n / m < 2 {
                    return bad(format!(
                        "sample size {n} leaves fewer than 2 samples per angle"
                    ));
                }
            }
        }
        if self.sample_sizes[0] < 2 {
            return bad("sample sizes must be at least 2".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.reference_mode == ReferenceMode::Estimated {
            let max_n = *self.sample_sizes.last().unwrap();
            if self.reference_size < REFERENCE_FACTOR * max_n {
                return bad(format!(
                    "reference_size {} must be at least {REFERENCE_FACTOR}x the largest sample size {max_n}",
                    self.reference_size
                ));
            }
            if self.reference_size % REFERENCE_ANGLES != 0 {
                return bad(format!(
                    "reference_size must be divisible by {REFERENCE_ANGLES}"
                ));
            }
        }
        Ok(())
    }
}

/// Reference covariance for one scheme.
///
/// In estimated mode homodyne uses [`REFERENCE_ANGLES`] equally spaced angles
/// with `reference_size / REFERENCE_ANGLES` samples each; heterodyne uses
/// `reference_size` pairs.
pub fn build_reference(
    state: &StateSpec,
    det: &DetectionModel,
    scheme: Scheme,
    reference_size: usize,
    seed: u64,
    mode: ReferenceMode,
) -> Result<CovMat> {
    let g_w = wigner_cov(state);
    if mode == ReferenceMode::ExactTruth {
        return Ok(g_w);
    }
    match scheme {
        Scheme::Hom => {
            let per_angle = reference_size / REFERENCE_ANGLES;
            let protocol = AngleProtocol::new(REFERENCE_ANGLES, 0.0)?;
            let s = derive_seed(seed, &[tag::REFERENCE, tag::HOMODYNE]);
            let stats = sample_homodyne_stats(&g_w, det, &protocol, per_angle, s)?;
            Ok(estimate_homodyne_ml_stats(&stats, det)?
                .require_converged()?
                .g_w_hat)
        }
        Scheme::Het => {
            let s = derive_seed(seed, &[tag::REFERENCE, tag::HETERODYNE]);
            let stats = sample_heterodyne_stats(&g_w, det, reference_size, s)?;
            Ok(estimate_heterodyne_stats(&stats, det)?.g_w_hat)
        }
    }
}

/// Mean HS distance for one (scheme, N, m) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scheme: Scheme,
    pub sample_size: usize,
    /// Angle count for homodyne; `None` for heterodyne.
    pub angle_count: Option<usize>,
    pub dhs_mean: f64,
    pub dhs_stderr: f64,
    pub successes: usize,
    /// Repetitions excluded because the estimator failed or did not converge.
    pub failures: usize,
    pub psd_clipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEntry {
    pub sample_size: usize,
    pub angle_count: usize,
    pub gamma_empirical: Option<f64>,
    pub gamma_stderr: Option<f64>,
    pub gamma_analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    pub rng: String,
    pub seed: u64,
    pub reference_hom: CovMat,
    pub reference_het: CovMat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub cells: Vec<CellReport>,
    pub gammas: Vec<GammaEntry>,
    pub provenance: Provenance,
}

impl BenchmarkReport {
    pub fn cell(&self, scheme: Scheme, n: usize, m: Option<usize>) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.scheme == scheme
                && c.sample_size == n
                && (scheme == Scheme::Het || c.angle_count == m)
        })
    }

    pub fn gamma(&self, n: usize, m: usize) -> Option<&GammaEntry> {
        self.gammas
            .iter()
            .find(|g| g.sample_size == n && g.angle_count == m)
    }
}

/// Outcome of one estimator run inside a repetition.
#[derive(Debug, Clone, Copy)]
enum Trial {
    Ok { dhs: f64, clipped: bool },
    Failed,
}

struct RepetitionResult {
    /// `[n_index]`
    het: Vec<Trial>,
    /// `[n_index][m_index]`
    hom: Vec<Vec<Trial>>,
}

fn run_repetition(
    cfg: &BenchmarkConfig,
    g_w: &CovMat,
    ref_hom: &CovMat,
    ref_het: &CovMat,
    rep: usize,
) -> RepetitionResult {
    let rep_seed = derive_seed(cfg.seed, &[tag::REPETITION, rep as u64]);
    let mut het = Vec::with_capacity(cfg.sample_sizes.len());
    let mut hom = Vec::with_capacity(cfg.sample_sizes.len());
    for (ni, &n) in cfg.sample_sizes.iter().enumerate() {
        let het_seed = derive_seed(rep_seed, &[tag::HETERODYNE, ni as u64]);
        let trial = sample_heterodyne_stats(g_w, &cfg.det, n, het_seed)
            .and_then(|s| estimate_heterodyne_stats(&s, &cfg.det))
            .map_or(Trial::Failed, |r| Trial::Ok {
                dhs: hs_distance(&r.g_w_hat, ref_het),
                clipped: r.diagnostics.psd_clipped,
            });
        het.push(trial);

        let row = cfg
            .angle_counts
            .iter()
            .enumerate()
            .map(|(mi, &m)| {
                let unit = [ni as u64, mi as u64];
                let offset_seed = derive_seed(rep_seed, &[tag::OFFSET, unit[0], unit[1]]);
                let hom_seed = derive_seed(rep_seed, &[tag::HOMODYNE, unit[0], unit[1]]);
                AngleProtocol::random_offset(m, offset_seed)
                    .and_then(|p| sample_homodyne_stats(g_w, &cfg.det, &p, n / m, hom_seed))
                    .and_then(|s| estimate_homodyne_ml_stats(&s, &cfg.det))
                    .and_then(|r| r.require_converged())
                    .map_or(Trial::Failed, |r| Trial::Ok {
                        dhs: hs_distance(&r.g_w_hat, ref_hom),
                        clipped: r.diagnostics.psd_clipped,
                    })
            })
            .collect();
        hom.push(row);
    }
    RepetitionResult { het, hom }
}

fn summarize<'a>(
    scheme: Scheme,
    n: usize,
    m: Option<usize>,
    trials: impl Iterator<Item = &'a Trial>,
) -> CellReport {
    let mut values = Vec::new();
    let mut failures = 0;
    let mut clipped = 0;
    for t in trials {
        match *t {
            Trial::Ok { dhs, clipped: c } => {
                values.push(dhs);
                clipped += usize::from(c);
            }
            Trial::Failed => failures += 1,
        }
    }
    let (dhs_mean, dhs_stderr) = mean_stderr(&values);
    CellReport {
        scheme,
        sample_size: n,
        angle_count: m,
        dhs_mean,
        dhs_stderr,
        successes: values.len(),
        failures,
        psd_clipped: clipped,
    }
}

/// Ratio of means with a first-order (delta method) standard error.
pub fn ratio_with_stderr(num: (f64, f64), den: (f64, f64)) -> (f64, f64) {
    let r = num.0 / den.0;
    let rel = ((num.1 / num.0).powi(2) + (den.1 / den.0).powi(2)).sqrt();
    (r, r * rel)
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let g_w = wigner_cov(&cfg.state);
    let ref_hom = build_reference(
        &cfg.state,
        &cfg.det,
        Scheme::Hom,
        cfg.reference_size,
        cfg.seed,
        cfg.reference_mode,
    )?;
    let ref_het = build_reference(
        &cfg.state,
        &cfg.det,
        Scheme::Het,
        cfg.reference_size,
        cfg.seed,
        cfg.reference_mode,
    )?;

    let reps: Vec<RepetitionResult> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(cfg, &g_w, &ref_hom, &ref_het, r))
        .collect();

    let mut cells = Vec::new();
    let mut gammas = Vec::new();
    for (ni, &n) in cfg.sample_sizes.iter().enumerate() {
        let het = summarize(Scheme::Het, n, None, reps.iter().map(|r| &r.het[ni]));
        for (mi, &m) in cfg.angle_counts.iter().enumerate() {
            let hom = summarize(Scheme::Hom, n, Some(m), reps.iter().map(|r| &r.hom[ni][mi]));
            let (gamma_empirical, gamma_stderr) = if het.successes >= MIN_GAMMA_REPETITIONS
                && hom.successes >= MIN_GAMMA_REPETITIONS
            {
                let (g, se) = ratio_with_stderr(
                    (het.dhs_mean, het.dhs_stderr),
                    (hom.dhs_mean, hom.dhs_stderr),
                );
                (Some(g), Some(se))
            } else {
                (None, None)
            };
            gammas.push(GammaEntry {
                sample_size: n,
                angle_count: m,
                gamma_empirical,
                gamma_stderr,
                gamma_analytic: gamma_analytic(&cfg.state, &cfg.det, m)?,
            });
            cells.push(hom);
        }
        cells.push(het);
    }

    Ok(BenchmarkReport {
        config: cfg.clone(),
        cells,
        gammas,
        provenance: Provenance {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ALGORITHM.to_string(),
            seed: cfg.seed,
            reference_hom: ref_hom,
            reference_het: ref_het,
        },
    })
}

/// `N * E[D_HS]` for the heterodyne sample covariance of `sigma`.
///
/// Uses `E[(S - Sigma)_ij^2] = (Sigma_ii Sigma_jj + Sigma_ij^2) / N`.
pub fn heterodyne_error_coefficient(sigma: &CovMat) -> f64 {
    let (a, b, c) = (sigma.g11, sigma.g12, sigma.g22);
    2.0 * (a * a + c * c + a * c + b * b)
}

/// `N * 2 tr(I^-1)` for one homodyne protocol, where `I` is the Fisher
/// information of `(a0, a1, a2)` with `N/m` samples per angle.
fn homodyne_crb_coefficient(sigma: &CovMat, protocol: &AngleProtocol) -> Result<f64> {
    let m = protocol.count as f64;
    let mut info: Mat3 = [[0.0; 3]; 3];
    for theta in protocol.angles() {
        let s2 = marginal_variance(sigma, theta);
        if !(s2 > 0.0) {
            return Err(TomoError::SingularMatrix { det: sigma.det() });
        }
        let (s, c) = (2.0 * theta).sin_cos();
        let f = [1.0, c, s];
        let w = 1.0 / (m * 2.0 * s2 * s2);
        for i in 0..3 {
            for j in 0..3 {
                info[i][j] += w * f[i] * f[j];
            }
        }
    }
    let inv = inverse3(&info).ok_or(TomoError::SingularMatrix { det: sigma.det() })?;
    Ok(2.0 * (inv[0][0] + inv[1][1] + inv[2][2]))
}

/// `N * E[D_HS]` for the homodyne estimator at the Cramer-Rao bound,
/// averaged over a uniformly random protocol offset.
pub fn homodyne_error_coefficient(sigma: &CovMat, angle_count: usize) -> Result<f64> {
    let proto0 = AngleProtocol::new(angle_count, 0.0)?;
    if distinct_angles_mod_pi(&proto0.angles()) < 3 {
        return Err(TomoError::Underdetermined {
            distinct: distinct_angles_mod_pi(&proto0.angles()),
        });
    }
    let step = proto0.step();
    let k = OFFSET_QUADRATURE_POINTS;
    let mut total = 0.0;
    for i in 0..k {
        let offset = step * (i as f64 + 0.5) / k as f64;
        total += homodyne_crb_coefficient(sigma, &AngleProtocol::new(angle_count, offset)?)?;
    }
    Ok(total / k as f64)
}

/// Asymptotic `gamma` from the Wishart moments and the homodyne Fisher information.
pub fn gamma_analytic(state: &StateSpec, det: &DetectionModel, angle_count: usize) -> Result<f64> {
    let g_w = wigner_cov(state);
    let sigma_het = to_heterodyne_cov(&g_w, det) + det.g_elec;
    let sigma_hom = to_homodyne_cov(&g_w, det) + det.g_elec;
    if sigma_hom.det() <= crate::gaussian::SINGULAR_DET_TOL {
        return Err(TomoError::SingularMatrix {
            det: sigma_hom.det(),
        });
    }
    Ok(heterodyne_error_coefficient(&sigma_het)
        / homodyne_error_coefficient(&sigma_hom, angle_count)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaSource {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMapConfig {
    pub mus: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub det: DetectionModel,
    pub sample_size: usize,
    pub angle_count: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub source: GammaSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCell {
    pub mu: f64,
    pub lambda: f64,
    /// Missing when the cell failed.
    pub gamma: Option<f64>,
    pub gamma_stderr: Option<f64>,
    pub gamma_analytic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `count` points geometrically spaced from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn gamma_cell(cfg: &GammaMapConfig, idx: usize, mu: f64, lambda: f64) -> GammaCell {
    let mut cell = GammaCell {
        mu,
        lambda,
        gamma: None,
        gamma_stderr: None,
        gamma_analytic: None,
        error: None,
    };
    let state = match StateSpec::new(mu, lambda, 0.0) {
        Ok(s) => s,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    match gamma_analytic(&state, &cfg.det, cfg.angle_count) {
        Ok(g) => cell.gamma_analytic = Some(g),
        Err(e) => cell.error = Some(e.to_string()),
    }
    match cfg.source {
        GammaSource::Analytic => cell.gamma = cell.gamma_analytic,
        GammaSource::Empirical => {
            let bench = BenchmarkConfig {
                state,
                det: cfg.det,
                sample_sizes: vec![cfg.sample_size],
                angle_counts: vec![cfg.angle_count],
                repetitions: cfg.repetitions,
                reference_size: cfg.sample_size * REFERENCE_FACTOR,
                reference_mode: ReferenceMode::ExactTruth,
                seed: derive_seed(cfg.seed, &[tag::CELL, idx as u64]),
            };
            match run_benchmark(&bench) {
                Ok(r) => {
                    let g = &r.gammas[0];
                    cell.gamma = g.gamma_empirical;
                    cell.gamma_stderr = g.gamma_stderr;
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
        }
    }
    cell
}

/// Evaluate gamma over the `(mu, lambda)` grid, row-major in `mu`.
pub fn gamma_map(cfg: &GammaMapConfig) -> Vec<GammaCell> {
    let points: Vec<(f64, f64)> = cfg
        .mus
        .iter()
        .flat_map(|&mu| cfg.lambdas.iter().map(move |&l| (mu, l)))
        .collect();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(mu, l))| gamma_cell(cfg, i, mu, l))
        .collect()
}

/// Closed-form analytic crossover for isotropic states at unit efficiency:
/// `6 (mu + 1)^2 = 20 mu^2`.
pub fn isotropic_crossover_closed_form() -> f64 {
    let (a, b) = (6f64.sqrt(), 20f64.sqrt());
    a / (b - a)
}

/// Locate the isotropic `mu` at which `gamma(mu) = 1` by bisection.
///
/// `gamma_of` must be decreasing across `[lo, hi]`.
pub fn bisect_crossover(
    mut gamma_of: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let g_lo = gamma_of(lo)?;
    let g_hi = gamma_of(hi)?;
    if !(g_lo > 1.0 && g_hi < 1.0) {
        return Err(TomoError::InvalidConfig(format!(
            "bracket [{lo}, {hi}] does not straddle gamma = 1 ({g_lo}, {g_hi})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if gamma_of(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical gamma of the isotropic state `mu` with a fixed root seed.
///
/// Repetition seeds do not depend on `mu`, so consecutive evaluations share
/// random numbers and the bisection sees a smooth curve.
pub fn isotropic_gamma_empirical(
    mu: f64,
    det: &DetectionModel,
    sample_size: usize,
    angle_count: usize,
    repetitions: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let cfg = BenchmarkConfig {
        state: StateSpec::thermal(mu)?,
        det: *det,
        sample_sizes: vec![sample_size],
        angle_counts: vec![angle_count],
        repetitions,
        reference_size: sample_size * REFERENCE_FACTOR,
        reference_mode: ReferenceMode::ExactTruth,
        seed,
    };
    let r = run_benchmark(&cfg)?;
    let g = &r.gammas[0];
    match (g.gamma_empirical, g.gamma_stderr) {
        (Some(v), Some(se)) => Ok((v, se)),
        _ => Err(TomoError::InvalidConfig(format!(
            "need at least {MIN_GAMMA_REPETITIONS} successful repetitions for gamma"
        ))),
    }
}
