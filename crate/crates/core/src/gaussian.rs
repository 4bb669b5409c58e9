//! Covariance-matrix algebra for centered single-mode Gaussian states.
//!
//! Everything is expressed in shot-noise units: the vacuum has unit
//! variance in every quadrature.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};

/// Determinant at or below which a covariance matrix is treated as singular.
pub const SINGULAR_DET_TOL: f64 = 1e-12;

/// Symmetric 2x2 real matrix in shot-noise units.
///
/// `physical` records whether the matrix was positive semidefinite when it
/// was built. Raw estimates are allowed to be unphysical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovMat {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
    pub physical: bool,
}

impl CovMat {
    pub fn new(g11: f64, g12: f64, g22: f64) -> Self {
        let mut m = CovMat {
            g11,
            g12,
            g22,
            physical: false,
        };
        m.physical = m.is_psd();
        m
    }

    pub fn diag(g11: f64, g22: f64) -> Self {
        Self::new(g11, 0.0, g22)
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0)
    }

    pub fn scaled_identity(c: f64) -> Self {
        Self::diag(c, c)
    }

    pub fn zero() -> Self {
        Self::diag(0.0, 0.0)
    }

    pub fn trace(&self) -> f64 {
        self.g11 + self.g22
    }

    pub fn det(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g12
    }

    fn is_psd(&self) -> bool {
        let scale = self.g11.abs().max(self.g22.abs()).max(1.0);
        let tol = 1e-12 * scale;
        self.g11 >= -tol && self.g22 >= -tol && self.det() >= -tol * scale
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * self.trace();
        let r = (0.25 * (self.g11 - self.g22).powi(2) + self.g12 * self.g12).sqrt();
        (half_tr - r, half_tr + r)
    }

    /// Angle in `[0, pi)` of the eigenvector belonging to the larger eigenvalue.
    /// Zero for multiples of the identity.
    pub fn major_axis_angle(&self) -> f64 {
        let phi = 0.5 * (2.0 * self.g12).atan2(self.g11 - self.g22);
        fold_half_turn(phi)
    }

    /// `R(phi) * self * R(phi)^T`.
    pub fn rotated(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let g11 = c * c * self.g11 - 2.0 * c * s * self.g12 + s * s * self.g22;
        let g22 = s * s * self.g11 + 2.0 * c * s * self.g12 + c * c * self.g22;
        let g12 = c * s * (self.g11 - self.g22) + (c * c - s * s) * self.g12;
        CovMat::new(g11, g12, g22)
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det <= SINGULAR_DET_TOL {
            return Err(TomoError::SingularMatrix { det });
        }
        Ok(CovMat::new(self.g22 / det, -self.g12 / det, self.g11 / det))
    }

    /// Lower Cholesky factor `(l11, l21, l22)`; handles the semidefinite case.
    pub fn cholesky(&self) -> Result<(f64, f64, f64)> {
        if !self.is_psd() {
            return Err(TomoError::InvalidState(format!(
                "covariance {self:?} is not positive semidefinite"
            )));
        }
        let l11 = self.g11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { self.g12 / l11 } else { 0.0 };
        let l22 = (self.g22 - l21 * l21).max(0.0).sqrt();
        Ok((l11, l21, l22))
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.g11, self.g12], [self.g12, self.g22]]
    }

    pub fn max_abs_diff(&self, other: &CovMat) -> f64 {
        (self.g11 - other.g11)
            .abs()
            .max((self.g12 - other.g12).abs())
            .max((self.g22 - other.g22).abs())
    }
}

impl Add for CovMat {
    type Output = CovMat;
    fn add(self, o: CovMat) -> CovMat {
        CovMat::new(self.g11 + o.g11, self.g12 + o.g12, self.g22 + o.g22)
    }
}

impl Sub for CovMat {
    type Output = CovMat;
    fn sub(self, o: CovMat) -> CovMat {
        CovMat::new(self.g11 - o.g11, self.g12 - o.g12, self.g22 - o.g22)
    }
}

impl Mul<CovMat> for f64 {
    type Output = CovMat;
    fn mul(self, m: CovMat) -> CovMat {
        CovMat::new(self * m.g11, self * m.g12, self * m.g22)
    }
}

pub(crate) fn fold_half_turn(phi: f64) -> f64 {
    let f = phi.rem_euclid(PI);
    // rem_euclid can round up to exactly PI for tiny negative inputs
    if f >= PI {
        0.0
    } else {
        f
    }
}

/// `(mu, lambda, orientation)` parametrization of a centered Gaussian state.
///
/// The Wigner covariance is `R(orientation) diag(mu/lambda, mu*lambda) R^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub mu: f64,
    pub lambda: f64,
    pub orientation: f64,
}

impl StateSpec {
    pub fn new(mu: f64, lambda: f64, orientation: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(TomoError::InvalidState(format!("mu must be > 0, got {mu}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(TomoError::InvalidState(format!(
                "lambda must be > 0, got {lambda}"
            )));
        }
        if !orientation.is_finite() {
            return Err(TomoError::InvalidState("orientation must be finite".into()));
        }
        Ok(StateSpec {
            mu,
            lambda,
            orientation: fold_half_turn(orientation),
        })
    }

    pub fn vacuum() -> Self {
        StateSpec {
            mu: 1.0,
            lambda: 1.0,
            orientation: 0.0,
        }
    }

    /// Phase-insensitive state with quadrature variance `variance`.
    pub fn thermal(variance: f64) -> Result<Self> {
        Self::new(variance, 1.0, 0.0)
    }
}

/// Detector efficiency plus additive electronic/background noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub eta: f64,
    pub g_elec: CovMat,
}

impl DetectionModel {
    pub fn new(eta: f64, g_elec: CovMat) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(TomoError::InvalidDetection(format!(
                "eta must lie in (0, 1], got {eta}"
            )));
        }
        if !g_elec.physical {
            return Err(TomoError::InvalidDetection(
                "electronic noise covariance must be positive semidefinite".into(),
            ));
        }
        Ok(DetectionModel { eta, g_elec })
    }

    pub fn ideal() -> Self {
        DetectionModel {
            eta: 1.0,
            g_elec: CovMat::zero(),
        }
    }

    pub fn with_efficiency(eta: f64) -> Result<Self> {
        Self::new(eta, CovMat::zero())
    }

    /// Loss noise `(1 - eta) / eta` added to every homodyne variance.
    pub fn homodyne_excess(&self) -> f64 {
        (1.0 - self.eta) / self.eta
    }

    /// Total noise `(2 - eta) / eta` added to the heterodyne covariance.
    pub fn heterodyne_excess(&self) -> f64 {
        (2.0 - self.eta) / self.eta
    }
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self::ideal()
    }
}

pub fn wigner_cov(spec: &StateSpec) -> CovMat {
    let d = CovMat::diag(spec.mu / spec.lambda, spec.mu * spec.lambda);
    if spec.orientation == 0.0 {
        d
    } else {
        d.rotated(spec.orientation)
    }
}

/// Covariance inferred by homodyne detection: `G_W + (1 - eta)/eta * I`.
pub fn to_homodyne_cov(g_w: &CovMat, det: &DetectionModel) -> CovMat {
    let e = det.homodyne_excess();
    CovMat::new(g_w.g11 + e, g_w.g12, g_w.g22 + e)
}

/// Covariance inferred by heterodyne detection: `G_hom + I/eta`.
pub fn to_heterodyne_cov(g_w: &CovMat, det: &DetectionModel) -> CovMat {
    let hom = to_homodyne_cov(g_w, det);
    let e = 1.0 / det.eta;
    CovMat::new(hom.g11 + e, hom.g12, hom.g22 + e)
}

/// `n^T g n` with `n = (cos theta, sin theta)`.
pub fn marginal_variance(g: &CovMat, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c * g.g11 + 2.0 * c * s * g.g12 + s * s * g.g22
}

/// `(n^T g^-1 n)^-1`, the variance along `n` conditioned on the orthogonal quadrature.
pub fn conditional_variance(g: &CovMat, theta: f64) -> Result<f64> {
    let det = g.det();
    if det <= SINGULAR_DET_TOL {
        return Err(TomoError::SingularMatrix { det });
    }
    // n^T adj(g) n / det
    let (s, c) = theta.sin_cos();
    let quad_adj = c * c * g.g22 - 2.0 * c * s * g.g12 + s * s * g.g11;
    Ok(det / quad_adj)
}

/// Hilbert-Schmidt distance `Tr{(a - b)^2}`.
pub fn hs_distance(a: &CovMat, b: &CovMat) -> f64 {
    let d11 = a.g11 - b.g11;
    let d12 = a.g12 - b.g12;
    let d22 = a.g22 - b.g22;
    d11 * d11 + d22 * d22 + 2.0 * d12 * d12
}

/// Squeezing and antisqueezing relative to the vacuum, in dB.
pub fn squeezing_db(spec: &StateSpec) -> (f64, f64) {
    let sqz = -10.0 * (spec.mu / spec.lambda).log10();
    let antisqz = 10.0 * (spec.mu * spec.lambda).log10();
    (sqz, antisqz)
}

/// How a thermal quadrature variance maps to a mean photon number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhotonConvention {
    /// `N = V / 2`; matches the published thermal-state numbers.
    #[default]
    HalfVariance,
    /// `N = (V - 1) / 2`; excess over the vacuum only.
    ExcessNoise,
}

pub fn thermal_photon_number(variance: f64) -> f64 {
    thermal_photon_number_with(variance, PhotonConvention::HalfVariance)
}

pub fn thermal_photon_number_with(variance: f64, convention: PhotonConvention) -> f64 {
    match convention {
        PhotonConvention::HalfVariance => variance / 2.0,
        PhotonConvention::ExcessNoise => (variance - 1.0) / 2.0,
    }
}
