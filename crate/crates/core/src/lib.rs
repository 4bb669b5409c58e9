//! Simulation and reconstruction toolkit comparing homodyne and heterodyne
//! covariance tomography of single-mode Gaussian states.
//!
//! The crate covers the full in-silico pipeline: covariance algebra
//! ([`gaussian`]), seeded record synthesis ([`sampling`]), covariance
//! reconstruction ([`estimation`]), Monte Carlo accuracy comparison
//! ([`benchmark`]), goodness-of-fit checks ([`gaussianity`]) and dataset /
//! report file formats ([`io`]).

pub mod benchmark;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod gaussianity;
pub mod io;
mod linalg;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use error::{Result, TomoError};
pub use estimation::{
    estimate_heterodyne, estimate_homodyne_ml, estimate_homodyne_wls, extract_params, psd_project,
    EstimateResult, Scheme,
};
pub use gaussian::{
    conditional_variance, hs_distance, marginal_variance, squeezing_db, thermal_photon_number,
    to_heterodyne_cov, to_homodyne_cov, wigner_cov, CovMat, DetectionModel, StateSpec,
};
pub use sampling::{
    sample_heterodyne, sample_homodyne, thermalize_heterodyne, thermalize_homodyne, AngleProtocol,
    HeterodyneDataset, HomodyneDataset,
};
