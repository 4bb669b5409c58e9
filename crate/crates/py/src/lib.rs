//! Python bindings: covariance algebra, record synthesis, estimation,
//! benchmarks and the gaussianity battery.
//!
//! Structured reports (benchmarks, gamma maps, gaussianity) are returned as
//! plain dicts decoded from their JSON form.

use std::path::PathBuf;

use gauss_tomo::benchmark::{self, BenchmarkConfig, GammaMapConfig, GammaSource, ReferenceMode};
use gauss_tomo::io::{self, Dataset, DatasetFile};
use gauss_tomo::{gaussian, gaussianity, Scheme, TomoError};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: TomoError) -> PyErr {
    let msg = e.to_string();
    match e {
        TomoError::SingularMatrix { .. }
        | TomoError::NotConverged { .. }
        | TomoError::DegenerateVariance(_) => PyArithmeticError::new_err(msg),
        TomoError::Io(_) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<PyObject> {
    let json = py.import_bound("json")?;
    Ok(json.call_method1("loads", (v.to_string(),))?.unbind())
}

#[pyclass(name = "CovMat", frozen)]
#[derive(Clone, Copy)]
pub struct PyCovMat(pub gaussian::CovMat);

#[pymethods]
impl PyCovMat {
    #[new]
    fn new(g11: f64, g12: f64, g22: f64) -> Self {
        PyCovMat(gaussian::CovMat::new(g11, g12, g22))
    }

    #[staticmethod]
    fn identity() -> Self {
        PyCovMat(gaussian::CovMat::identity())
    }

    #[getter]
    fn g11(&self) -> f64 {
        self.0.g11
    }

    #[getter]
    fn g12(&self) -> f64 {
        self.0.g12
    }

    #[getter]
    fn g22(&self) -> f64 {
        self.0.g22
    }

    #[getter]
    fn physical(&self) -> bool {
        self.0.physical
    }

    fn trace(&self) -> f64 {
        self.0.trace()
    }

    fn det(&self) -> f64 {
        self.0.det()
    }

    /// Ascending eigenvalues.
    fn eigenvalues(&self) -> (f64, f64) {
        self.0.eigenvalues()
    }

    fn rotated(&self, phi: f64) -> Self {
        PyCovMat(self.0.rotated(phi))
    }

    fn to_list(&self) -> [[f64; 2]; 2] {
        self.0.as_array()
    }

    fn __repr__(&self) -> String {
        format!("CovMat({}, {}, {})", self.0.g11, self.0.g12, self.0.g22)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

#[pyclass(name = "StateSpec", frozen)]
#[derive(Clone, Copy)]
pub struct PyStateSpec(pub gaussian::StateSpec);

#[pymethods]
impl PyStateSpec {
    #[new]
    #[pyo3(signature = (mu, lam, orientation = 0.0))]
    fn new(mu: f64, lam: f64, orientation: f64) -> PyResult<Self> {
        gaussian::StateSpec::new(mu, lam, orientation)
            .map(PyStateSpec)
            .map_err(to_py)
    }

    #[staticmethod]
    fn vacuum() -> Self {
        PyStateSpec(gaussian::StateSpec::vacuum())
    }

    #[staticmethod]
    fn thermal(variance: f64) -> PyResult<Self> {
        gaussian::StateSpec::thermal(variance)
            .map(PyStateSpec)
            .map_err(to_py)
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter(lam)]
    fn lambda(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn orientation(&self) -> f64 {
        self.0.orientation
    }

    fn __repr__(&self) -> String {
        format!(
            "StateSpec(mu={}, lam={}, orientation={})",
            self.0.mu, self.0.lambda, self.0.orientation
        )
    }
}

#[pyclass(name = "DetectionModel", frozen)]
#[derive(Clone, Copy)]
pub struct PyDetectionModel(pub gaussian::DetectionModel);

#[pymethods]
impl PyDetectionModel {
    #[new]
    #[pyo3(signature = (eta = 1.0, g_elec = None))]
    fn new(eta: f64, g_elec: Option<PyCovMat>) -> PyResult<Self> {
        let g = g_elec.map_or(gaussian::CovMat::zero(), |g| g.0);
        gaussian::DetectionModel::new(eta, g)
            .map(PyDetectionModel)
            .map_err(to_py)
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.0.eta
    }

    #[getter]
    fn g_elec(&self) -> PyCovMat {
        PyCovMat(self.0.g_elec)
    }

    fn __repr__(&self) -> String {
        format!(
            "DetectionModel(eta={}, g_elec={:?})",
            self.0.eta,
            self.0.g_elec.as_array()
        )
    }
}

fn det_or_ideal(det: Option<PyDetectionModel>) -> gaussian::DetectionModel {
    det.map_or_else(gaussian::DetectionModel::ideal, |d| d.0)
}

/// A homodyne or heterodyne record.
#[pyclass(name = "Dataset")]
#[derive(Clone)]
pub struct PyDataset(pub Dataset);

#[pymethods]
impl PyDataset {
    #[getter]
    fn scheme(&self) -> String {
        self.0.scheme().to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.meta().seed
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.0.meta().notes.clone()
    }

    #[getter]
    fn detection(&self) -> PyDetectionModel {
        PyDetectionModel(self.0.meta().detection)
    }

    /// Homodyne angles; empty for heterodyne records.
    #[getter]
    fn angles(&self) -> Vec<f64> {
        match &self.0 {
            Dataset::Hom(d) => d.angles.clone(),
            Dataset::Het(_) => Vec::new(),
        }
    }

    /// Per-angle value lists (homodyne) or `[x, p]` pairs (heterodyne).
    fn values(&self, py: Python<'_>) -> PyObject {
        match &self.0 {
            Dataset::Hom(d) => d.samples.clone().into_py(py),
            Dataset::Het(d) => d.pairs.clone().into_py(py),
        }
    }

    fn __len__(&self) -> usize {
        match &self.0 {
            Dataset::Hom(d) => d.total_count(),
            Dataset::Het(d) => d.pairs.len(),
        }
    }

    fn thermalize(&self, seed: u64) -> PyResult<Self> {
        let d = match &self.0 {
            Dataset::Hom(d) => {
                Dataset::Hom(gauss_tomo::thermalize_homodyne(d, seed).map_err(to_py)?)
            }
            Dataset::Het(d) => {
                Dataset::Het(gauss_tomo::thermalize_heterodyne(d, seed).map_err(to_py)?)
            }
        };
        Ok(PyDataset(d))
    }

    /// Write as `csv` or `bin`.
    #[pyo3(signature = (path, format = "csv"))]
    fn save(&self, path: PathBuf, format: &str) -> PyResult<()> {
        let file = DatasetFile {
            dataset: self.0.clone(),
            provenance: serde_json::Value::Null,
        };
        let w = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        match format {
            "csv" => io::write_dataset_csv(w, &file),
            "bin" => io::write_dataset_bin(w, &file),
            other => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
        }
        .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset(
            io::read_dataset_path(&path).map_err(to_py)?.dataset,
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(scheme={}, events={})",
            self.0.scheme(),
            self.__len__()
        )
    }
}

#[pyclass(name = "EstimateResult", frozen)]
pub struct PyEstimate(gauss_tomo::EstimateResult);

#[pymethods]
impl PyEstimate {
    #[getter]
    fn g_w_hat(&self) -> PyCovMat {
        PyCovMat(self.0.g_w_hat)
    }

    #[getter]
    fn scheme(&self) -> String {
        self.0.scheme.to_string()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.diagnostics.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.diagnostics.iterations
    }

    #[getter]
    fn psd_clipped(&self) -> bool {
        self.0.diagnostics.psd_clipped
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.0.diagnostics.log_likelihood
    }

    #[getter]
    fn per_angle_variances(&self) -> Option<Vec<f64>> {
        self.0.diagnostics.per_angle_variances.clone()
    }

    fn params(&self) -> PyResult<PyStateSpec> {
        self.0.params().map(PyStateSpec).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "EstimateResult(scheme={}, g_w_hat={})",
            self.0.scheme,
            PyCovMat(self.0.g_w_hat).__repr__()
        )
    }
}

#[pyfunction]
fn wigner_cov(state: PyStateSpec) -> PyCovMat {
    PyCovMat(gaussian::wigner_cov(&state.0))
}

#[pyfunction]
fn to_homodyne_cov(g_w: PyCovMat, det: PyDetectionModel) -> PyCovMat {
    PyCovMat(gaussian::to_homodyne_cov(&g_w.0, &det.0))
}

#[pyfunction]
fn to_heterodyne_cov(g_w: PyCovMat, det: PyDetectionModel) -> PyCovMat {
    PyCovMat(gaussian::to_heterodyne_cov(&g_w.0, &det.0))
}

#[pyfunction]
fn marginal_variance(g: PyCovMat, theta: f64) -> f64 {
    gaussian::marginal_variance(&g.0, theta)
}

#[pyfunction]
fn conditional_variance(g: PyCovMat, theta: f64) -> PyResult<f64> {
    gaussian::conditional_variance(&g.0, theta).map_err(to_py)
}

#[pyfunction]
fn hs_distance(a: PyCovMat, b: PyCovMat) -> f64 {
    gaussian::hs_distance(&a.0, &b.0)
}

/// `(squeezing, antisqueezing)` in dB.
#[pyfunction]
fn squeezing_db(state: PyStateSpec) -> (f64, f64) {
    gaussian::squeezing_db(&state.0)
}

#[pyfunction]
fn thermal_photon_number(variance: f64) -> f64 {
    gaussian::thermal_photon_number(variance)
}

#[pyfunction]
fn extract_params(g: PyCovMat) -> PyResult<PyStateSpec> {
    gauss_tomo::extract_params(&g.0)
        .map(PyStateSpec)
        .map_err(to_py)
}

/// `(projected, clipped)`.
#[pyfunction]
fn psd_project(g: PyCovMat) -> (PyCovMat, bool) {
    let (p, clipped) = gauss_tomo::psd_project(&g.0);
    (PyCovMat(p), clipped)
}

/// `count` equally spaced angles; the offset is drawn from `seed` when omitted.
#[pyfunction]
#[pyo3(signature = (g_w, angles, samples_per_angle, seed, det = None, offset = None))]
fn sample_homodyne(
    g_w: PyCovMat,
    angles: usize,
    samples_per_angle: usize,
    seed: u64,
    det: Option<PyDetectionModel>,
    offset: Option<f64>,
) -> PyResult<PyDataset> {
    let protocol = match offset {
        Some(o) => gauss_tomo::AngleProtocol::new(angles, o),
        None => gauss_tomo::AngleProtocol::random_offset(angles, seed),
    }
    .map_err(to_py)?;
    gauss_tomo::sample_homodyne(
        &g_w.0,
        &det_or_ideal(det),
        &protocol,
        samples_per_angle,
        seed,
    )
    .map(|d| PyDataset(Dataset::Hom(d)))
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (g_w, pairs, seed, det = None))]
fn sample_heterodyne(
    g_w: PyCovMat,
    pairs: usize,
    seed: u64,
    det: Option<PyDetectionModel>,
) -> PyResult<PyDataset> {
    gauss_tomo::sample_heterodyne(&g_w.0, &det_or_ideal(det), pairs, seed)
        .map(|d| PyDataset(Dataset::Het(d)))
        .map_err(to_py)
}

/// Estimator chosen by the dataset's scheme; `method` is `"ml"` or `"wls"`
/// for homodyne records. `det` defaults to the model stored in the record.
#[pyfunction]
#[pyo3(signature = (dataset, det = None, method = "ml"))]
fn estimate(
    dataset: &PyDataset,
    det: Option<PyDetectionModel>,
    method: &str,
) -> PyResult<PyEstimate> {
    let det = det.map_or(dataset.0.meta().detection, |d| d.0);
    let r = match (&dataset.0, method) {
        (Dataset::Hom(d), "ml") => gauss_tomo::estimate_homodyne_ml(d, &det),
        (Dataset::Hom(d), "wls") => gauss_tomo::estimate_homodyne_wls(d, &det),
        (Dataset::Het(d), "ml" | "wls") => gauss_tomo::estimate_heterodyne(d, &det),
        (_, other) => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    r.map(PyEstimate).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (state, angle_count = 10, det = None))]
fn gamma_analytic(
    state: PyStateSpec,
    angle_count: usize,
    det: Option<PyDetectionModel>,
) -> PyResult<f64> {
    benchmark::gamma_analytic(&state.0, &det_or_ideal(det), angle_count).map_err(to_py)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (state, sample_sizes, angle_counts, repetitions = 200, seed = 0, exact_truth = true, reference_size = None, det = None))]
fn run_benchmark(
    py: Python<'_>,
    state: PyStateSpec,
    sample_sizes: Vec<usize>,
    angle_counts: Vec<usize>,
    repetitions: usize,
    seed: u64,
    exact_truth: bool,
    reference_size: Option<usize>,
    det: Option<PyDetectionModel>,
) -> PyResult<PyObject> {
    let max_n = sample_sizes.iter().copied().max().unwrap_or(0);
    let cfg = BenchmarkConfig {
        state: state.0,
        det: det_or_ideal(det),
        sample_sizes,
        angle_counts,
        repetitions,
        reference_size: reference_size.unwrap_or(max_n * benchmark::REFERENCE_FACTOR),
        reference_mode: if exact_truth {
            ReferenceMode::ExactTruth
        } else {
            ReferenceMode::Estimated
        },
        seed,
    };
    let report = py
        .allow_threads(|| benchmark::run_benchmark(&cfg))
        .map_err(to_py)?;
    json_to_py(
        py,
        &serde_json::to_value(report).expect("report serializes"),
    )
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (mus, lambdas, sample_size = 10_000, angle_count = 10, repetitions = 200, seed = 0, analytic = false, det = None))]
fn gamma_map(
    py: Python<'_>,
    mus: Vec<f64>,
    lambdas: Vec<f64>,
    sample_size: usize,
    angle_count: usize,
    repetitions: usize,
    seed: u64,
    analytic: bool,
    det: Option<PyDetectionModel>,
) -> PyResult<PyObject> {
    let cfg = GammaMapConfig {
        mus,
        lambdas,
        det: det_or_ideal(det),
        sample_size,
        angle_count,
        repetitions,
        seed,
        source: if analytic {
            GammaSource::Analytic
        } else {
            GammaSource::Empirical
        },
    };
    let cells = py.allow_threads(|| benchmark::gamma_map(&cfg));
    json_to_py(py, &serde_json::to_value(cells).expect("cells serialize"))
}

#[pyfunction]
#[pyo3(signature = (samples, bins = gaussianity::DEFAULT_BINS))]
fn test_gaussianity(py: Python<'_>, samples: Vec<f64>, bins: usize) -> PyResult<PyObject> {
    let r = gaussianity::test_gaussianity(&samples, bins).map_err(to_py)?;
    json_to_py(py, &serde_json::to_value(r).expect("report serializes"))
}

#[pyfunction]
fn parse_scheme(s: &str) -> PyResult<String> {
    s.parse::<Scheme>().map(|s| s.to_string()).map_err(to_py)
}

#[pymodule]
pub fn gauss_tomo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCovMat>()?;
    m.add_class::<PyStateSpec>()?;
    m.add_class::<PyDetectionModel>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(wigner_cov, m)?)?;
    m.add_function(wrap_pyfunction!(to_homodyne_cov, m)?)?;
    m.add_function(wrap_pyfunction!(to_heterodyne_cov, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_variance, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_variance, m)?)?;
    m.add_function(wrap_pyfunction!(hs_distance, m)?)?;
    m.add_function(wrap_pyfunction!(squeezing_db, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_photon_number, m)?)?;
    m.add_function(wrap_pyfunction!(extract_params, m)?)?;
    m.add_function(wrap_pyfunction!(psd_project, m)?)?;
    m.add_function(wrap_pyfunction!(sample_homodyne, m)?)?;
    m.add_function(wrap_pyfunction!(sample_heterodyne, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_map, m)?)?;
    m.add_function(wrap_pyfunction!(test_gaussianity, m)?)?;
    m.add_function(wrap_pyfunction!(parse_scheme, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
