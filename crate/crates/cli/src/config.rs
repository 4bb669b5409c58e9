//! Declarative run configuration: TOML file, presets and flag overrides,
//! resolved into one [`RunConfig`] that is validated before any work starts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gauss_tomo::benchmark::{REFERENCE_ANGLES, REFERENCE_FACTOR};
use gauss_tomo::{CovMat, DetectionModel, Scheme, StateSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Estimate,
    Benchmark,
    GammaMap,
    Gaussianity,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Benchmark => "benchmark",
            Command::GammaMap => "gamma-map",
            Command::Gaussianity => "gaussianity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Bin,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Bin => "bin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ml,
    Wls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Hom,
    Het,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Hom => Scheme::Hom,
            SchemeArg::Het => Scheme::Het,
        }
    }
}

/// Named states from the experiment's table of reconstructed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NamedState {
    Vacuum,
    StronglySqueezed,
    WeaklySqueezed,
    BrightThermal,
    DimThermal,
}

impl NamedState {
    pub fn params(self) -> (f64, f64) {
        match self {
            NamedState::Vacuum => (1.0, 1.0),
            NamedState::StronglySqueezed => (6.44, 11.61),
            NamedState::WeaklySqueezed => (4.46, 6.49),
            NamedState::BrightThermal => (38.4, 1.0),
            NamedState::DimThermal => (15.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSection {
    pub mu: f64,
    pub lambda: f64,
    pub orientation: f64,
}

impl Default for StateSection {
    fn default() -> Self {
        StateSection {
            mu: 1.0,
            lambda: 1.0,
            orientation: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    /// Unset means "unit efficiency" for simulations and "as recorded in the
    /// dataset" for estimates.
    pub eta: Option<f64>,
    /// Electronic noise `[g11, g12, g22]`.
    pub g_elec: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub scheme: SchemeArg,
    pub angles: usize,
    /// Total sampling events: values for homodyne, pairs for heterodyne.
    pub samples: usize,
    /// Fixed angle offset; drawn from the seed when unset.
    pub offset: Option<f64>,
    pub thermalize: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            scheme: SchemeArg::Hom,
            angles: 100,
            samples: 1_000_000,
            offset: None,
            thermalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub input: Option<String>,
    pub method: Method,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            input: None,
            method: Method::Ml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub sample_sizes: Vec<usize>,
    pub angle_counts: Vec<usize>,
    pub repetitions: usize,
    pub exact_truth: bool,
    /// Defaults to the smallest valid size for the largest sample size.
    pub reference_size: Option<usize>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            sample_sizes: vec![10_000],
            angle_counts: vec![10],
            repetitions: 200,
            exact_truth: false,
            reference_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaMapSection {
    pub mu_range: [f64; 2],
    pub lambda_range: [f64; 2],
    /// Points along `[mu, lambda]`, geometrically spaced.
    pub grid: [usize; 2],
    pub analytic: bool,
    pub samples: usize,
    pub angles: usize,
    pub repetitions: usize,
}

impl Default for GammaMapSection {
    fn default() -> Self {
        GammaMapSection {
            mu_range: [1.0, 50.0],
            lambda_range: [1.0, 20.0],
            grid: [5, 5],
            analytic: false,
            samples: 10_000,
            angles: 10,
            repetitions: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianitySection {
    pub input: Option<String>,
    pub bins: usize,
}

impl Default for GaussianitySection {
    fn default() -> Self {
        GaussianitySection {
            input: None,
            bins: gauss_tomo::gaussianity::DEFAULT_BINS,
        }
    }
}

/// Fully resolved experiment description. Its JSON serialization is what
/// gets hashed and embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub format: Format,
    pub state: StateSection,
    pub detection: DetectionSection,
    pub simulate: SimulateSection,
    pub estimate: EstimateSection,
    pub benchmark: BenchmarkSection,
    pub gamma_map: GammaMapSection,
    pub gaussianity: GaussianitySection,
}

/// Shape of the TOML file: everything optional, no command.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub state: StateSection,
    pub detection: DetectionSection,
    pub simulate: SimulateSection,
    pub estimate: EstimateSection,
    pub benchmark: BenchmarkSection,
    pub gamma_map: GammaMapSection,
    pub gaussianity: GaussianitySection,
}

pub const DEFAULT_SEED: u64 = 2016;

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        RunConfig {
            command,
            seed: DEFAULT_SEED,
            format: default_format(command),
            state: StateSection::default(),
            detection: DetectionSection::default(),
            simulate: SimulateSection::default(),
            estimate: EstimateSection::default(),
            benchmark: BenchmarkSection::default(),
            gamma_map: GammaMapSection::default(),
            gaussianity: GaussianitySection::default(),
        }
    }

    pub fn from_file(command: Command, file: FileConfig) -> Self {
        RunConfig {
            command,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            format: file.format.unwrap_or_else(|| default_format(command)),
            state: file.state,
            detection: file.detection,
            simulate: file.simulate,
            estimate: file.estimate,
            benchmark: file.benchmark,
            gamma_map: file.gamma_map,
            gaussianity: file.gaussianity,
        }
    }

    pub fn state_spec(&self) -> Result<StateSpec, CliError> {
        let s = &self.state;
        Ok(StateSpec::new(s.mu, s.lambda, s.orientation)?)
    }

    /// Detection model for simulations; unset fields mean ideal detection.
    pub fn detection_model(&self) -> Result<DetectionModel, CliError> {
        let g = self.detection.g_elec.unwrap_or([0.0; 3]);
        Ok(DetectionModel::new(
            self.detection.eta.unwrap_or(1.0),
            CovMat::new(g[0], g[1], g[2]),
        )?)
    }

    /// Detection model for estimates: explicit settings override the model
    /// recorded in the dataset.
    pub fn detection_for(&self, recorded: &DetectionModel) -> Result<DetectionModel, CliError> {
        let eta = self.detection.eta.unwrap_or(recorded.eta);
        let g_elec = match self.detection.g_elec {
            Some(g) => CovMat::new(g[0], g[1], g[2]),
            None => recorded.g_elec,
        };
        Ok(DetectionModel::new(eta, g_elec)?)
    }

    pub fn effective_reference_size(&self) -> usize {
        self.benchmark.reference_size.unwrap_or_else(|| {
            let max_n = self
                .benchmark
                .sample_sizes
                .iter()
                .copied()
                .max()
                .unwrap_or(0);
            (REFERENCE_FACTOR * max_n).div_ceil(REFERENCE_ANGLES) * REFERENCE_ANGLES
        })
    }

    /// Checks everything the chosen command depends on.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::Validation(m));
        if !matches!(self.command, Command::Estimate | Command::Gaussianity) {
            self.state_spec()?;
            self.detection_model()?;
        }
        match self.command {
            Command::Simulate => {
                let s = &self.simulate;
                if self.format == Format::Json {
                    return invalid("datasets are written as csv or bin".into());
                }
                if s.samples == 0 {
                    return invalid("simulate.samples must be positive".into());
                }
                if s.scheme == SchemeArg::Hom {
                    if s.angles == 0 {
                        return invalid("simulate.angles must be positive".into());
                    }
                    if s.samples % s.angles != 0 {
                        return invalid(format!(
                            "simulate.samples {} is not divisible by angles {}",
                            s.samples, s.angles
                        ));
                    }
                    if let Some(o) = s.offset {
                        gauss_tomo::AngleProtocol::new(s.angles, o)?;
                    }
                    if s.thermalize && s.angles < 2 {
                        return invalid("thermalize needs at least two angles".into());
                    }
                }
            }
            Command::Estimate | Command::Gaussianity => {
                let input = match self.command {
                    Command::Estimate => &self.estimate.input,
                    _ => &self.gaussianity.input,
                };
                if input.is_none() {
                    return invalid("an input dataset is required".into());
                }
                if self.format != Format::Json {
                    return invalid(format!("{} writes json only", self.command));
                }
                if self.command == Command::Gaussianity && self.gaussianity.bins < 4 {
                    return invalid("gaussianity.bins must be at least 4".into());
                }
                if self.detection.eta.is_some() || self.detection.g_elec.is_some() {
                    self.detection_for(&DetectionModel::ideal())?;
                }
            }
            Command::Benchmark => {
                if self.format == Format::Bin {
                    return invalid("benchmark writes csv or json".into());
                }
                self.benchmark_config()?.validate()?;
            }
            Command::GammaMap => {
                let g = &self.gamma_map;
                if self.format == Format::Bin {
                    return invalid("gamma-map writes csv or json".into());
                }
                if g.grid[0] == 0 || g.grid[1] == 0 {
                    return invalid("gamma_map.grid must be at least 1x1".into());
                }
                for (name, r) in [("mu_range", g.mu_range), ("lambda_range", g.lambda_range)] {
                    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                        return invalid(format!("gamma_map.{name} must satisfy 0 < lo <= hi"));
                    }
                }
                if g.lambda_range[0] < 1.0 {
                    return invalid("gamma_map.lambda_range must start at 1 or above".into());
                }
                if !g.analytic {
                    let probe = gauss_tomo::benchmark::BenchmarkConfig {
                        sample_sizes: vec![g.samples],
                        angle_counts: vec![g.angles],
                        repetitions: g.repetitions,
                        ..gauss_tomo::benchmark::BenchmarkConfig::new(
                            StateSpec::vacuum(),
                            g.samples,
                            self.seed,
                        )
                    };
                    probe.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn benchmark_config(&self) -> Result<gauss_tomo::benchmark::BenchmarkConfig, CliError> {
        use gauss_tomo::benchmark::{BenchmarkConfig, ReferenceMode};
        let b = &self.benchmark;
        Ok(BenchmarkConfig {
            state: self.state_spec()?,
            det: self.detection_model()?,
            sample_sizes: b.sample_sizes.clone(),
            angle_counts: b.angle_counts.clone(),
            repetitions: b.repetitions,
            reference_size: self.effective_reference_size(),
            reference_mode: if b.exact_truth {
                ReferenceMode::ExactTruth
            } else {
                ReferenceMode::Estimated
            },
            seed: self.seed,
        })
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

pub fn default_format(command: Command) -> Format {
    match command {
        Command::Simulate | Command::GammaMap => Format::Csv,
        Command::Estimate | Command::Benchmark | Command::Gaussianity => Format::Json,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// `"20x20"` → `[20, 20]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid(pub [usize; 2]);

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected MUxLAMBDA, got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
        Ok(Grid([parse(a)?, parse(b)?]))
    }
}

/// Three-decade benchmark with m in {5, 10, 15} and an estimated reference.
/// The scaled variant keeps the reference at a few million events.
pub fn apply_fig4_preset(cfg: &mut RunConfig, scaled: bool) {
    let b = &mut cfg.benchmark;
    b.angle_counts = vec![5, 10, 15];
    b.repetitions = 200;
    b.exact_truth = false;
    if scaled {
        b.sample_sizes = vec![300, 3_000, 30_000];
        b.reference_size = Some(3_000_000);
    } else {
        b.sample_sizes = vec![3_000, 30_000, 300_000];
        b.reference_size = Some(100_000_000);
    }
}

/// Gamma over the (mu, lambda) plane covering the measured states.
pub fn apply_fig3b_preset(cfg: &mut RunConfig) {
    let g = &mut cfg.gamma_map;
    g.mu_range = [1.0, 50.0];
    g.lambda_range = [1.0, 20.0];
    g.grid = [20, 20];
    g.samples = 10_000;
    g.angles = 10;
    g.repetitions = 200;
}
