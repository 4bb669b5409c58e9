//! Command pipelines. Each command turns a resolved config into in-memory
//! artifacts so `verify --rerun` can compare against files byte for byte.

use std::path::Path;

use gauss_tomo::benchmark::{
    gamma_map, geometric_grid, run_benchmark, GammaMapConfig, GammaSource,
};
use gauss_tomo::gaussianity::test_gaussianity;
use gauss_tomo::io::{
    benchmark_csv, estimate_record, gamma_map_csv, read_dataset, write_dataset_bin,
    write_dataset_csv, Dataset, DatasetFile, BINARY_MAGIC, FORMAT_TAG,
};
use gauss_tomo::rng::derive_seed;
use gauss_tomo::{
    estimate_heterodyne, estimate_homodyne_ml, estimate_homodyne_wls, sample_heterodyne,
    sample_homodyne, thermalize_heterodyne, thermalize_homodyne, wigner_cov, AngleProtocol,
    EstimateResult,
};
use serde_json::{json, Value};

use crate::config::{sha256_hex, Command, Format, Method, RunConfig, SchemeArg};
use crate::error::CliError;

pub const TOOL: &str = concat!("gauss-tomo ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub format: Format,
    pub bytes: Vec<u8>,
}

fn provenance(cfg: &RunConfig) -> Value {
    json!({
        "tool": TOOL,
        "command": cfg.command,
        "config_sha256": cfg.hash(),
        "seed": cfg.seed,
        "config": cfg,
    })
}

fn table_header(kind: &str, prov: &Value) -> String {
    format!(
        "# {FORMAT_TAG}, kind={kind}, config_sha256={}, seed={}\n# provenance={prov}\n",
        prov["config_sha256"].as_str().unwrap_or_default(),
        prov["seed"]
    )
}

fn json_artifact(v: &Value) -> Artifact {
    let mut bytes = serde_json::to_vec_pretty(v).expect("json value serializes");
    bytes.push(b'\n');
    Artifact {
        format: Format::Json,
        bytes,
    }
}

pub fn run(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    cfg.validate()?;
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Estimate => estimate(cfg),
        Command::Benchmark => benchmark(cfg),
        Command::GammaMap => gamma(cfg),
        Command::Gaussianity => gaussianity(cfg),
    }
}

fn simulate(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let s = &cfg.simulate;
    let spec = cfg.state_spec()?;
    let det = cfg.detection_model()?;
    let g = wigner_cov(&spec);
    let label = format!(
        "simulated mu={} lambda={} orientation={}",
        spec.mu, spec.lambda, spec.orientation
    );
    let thermal_seed = derive_seed(cfg.seed, &[1]);
    let dataset = match s.scheme {
        SchemeArg::Hom => {
            let protocol = match s.offset {
                Some(o) => AngleProtocol::new(s.angles, o)?,
                None => AngleProtocol::random_offset(s.angles, cfg.seed)?,
            };
            let mut d = sample_homodyne(&g, &det, &protocol, s.samples / s.angles, cfg.seed)?;
            d.meta.label = label;
            if s.thermalize {
                d = thermalize_homodyne(&d, thermal_seed)?;
            }
            Dataset::Hom(d)
        }
        SchemeArg::Het => {
            let mut d = sample_heterodyne(&g, &det, s.samples, cfg.seed)?;
            d.meta.label = label;
            if s.thermalize {
                d = thermalize_heterodyne(&d, thermal_seed)?;
            }
            Dataset::Het(d)
        }
    };
    let file = DatasetFile {
        dataset,
        provenance: provenance(cfg),
    };
    let mut bytes = Vec::new();
    match cfg.format {
        Format::Bin => write_dataset_bin(&mut bytes, &file)?,
        _ => write_dataset_csv(&mut bytes, &file)?,
    }
    Ok(vec![Artifact {
        format: cfg.format,
        bytes,
    }])
}

/// Reads a dataset and records its digest in the provenance block.
fn load_input(path: &str, prov: &mut Value) -> Result<DatasetFile, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let file = read_dataset(bytes.as_slice()).map_err(|e| match CliError::from(e) {
        CliError::Validation(m) => CliError::Validation(format!("{path}: {m}")),
        other => other,
    })?;
    prov["input_sha256"] = json!(sha256_hex(&bytes));
    if let Some(h) = file.provenance.get("config_sha256") {
        prov["input_config_sha256"] = h.clone();
    }
    Ok(file)
}

fn estimate(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let mut prov = provenance(cfg);
    let input = cfg.estimate.input.as_deref().unwrap_or_default();
    let file = load_input(input, &mut prov)?;
    let det = cfg.detection_for(&file.dataset.meta().detection)?;
    let result: EstimateResult = match &file.dataset {
        Dataset::Hom(d) => match cfg.estimate.method {
            Method::Ml => estimate_homodyne_ml(d, &det)?.require_converged()?,
            Method::Wls => estimate_homodyne_wls(d, &det)?,
        },
        Dataset::Het(d) => estimate_heterodyne(d, &det)?,
    };
    result.params()?;
    let record = estimate_record(&result, file.dataset.meta(), &prov);
    Ok(vec![json_artifact(&record)])
}

fn benchmark(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let prov = provenance(cfg);
    let report = run_benchmark(&cfg.benchmark_config()?)?;
    let mut doc = serde_json::to_value(&report).expect("report serializes");
    doc["provenance"] = prov.clone();
    let csv = table_header("benchmark", &prov) + &benchmark_csv(&report);
    Ok(vec![
        json_artifact(&doc),
        Artifact {
            format: Format::Csv,
            bytes: csv.into_bytes(),
        },
    ])
}

fn gamma(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let g = &cfg.gamma_map;
    let prov = provenance(cfg);
    let cells = gamma_map(&GammaMapConfig {
        mus: geometric_grid(g.mu_range[0], g.mu_range[1], g.grid[0]),
        lambdas: geometric_grid(g.lambda_range[0], g.lambda_range[1], g.grid[1]),
        det: cfg.detection_model()?,
        sample_size: g.samples,
        angle_count: g.angles,
        repetitions: g.repetitions,
        seed: cfg.seed,
        source: if g.analytic {
            GammaSource::Analytic
        } else {
            GammaSource::Empirical
        },
    });
    Ok(match cfg.format {
        Format::Json => vec![json_artifact(
            &json!({ "cells": cells, "provenance": prov }),
        )],
        _ => vec![Artifact {
            format: Format::Csv,
            bytes: (table_header("gamma-map", &prov) + &gamma_map_csv(&cells)).into_bytes(),
        }],
    })
}

fn gaussianity(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let mut prov = provenance(cfg);
    let input = cfg.gaussianity.input.as_deref().unwrap_or_default();
    let file = load_input(input, &mut prov)?;
    let bins = cfg.gaussianity.bins;
    let entry = |key: Value, values: &[f64]| -> Value {
        match test_gaussianity(values, bins) {
            Ok(r) => json!({ "bin": key, "report": r }),
            Err(e) => json!({ "bin": key, "error": e.to_string() }),
        }
    };
    let entries: Vec<Value> = match &file.dataset {
        Dataset::Hom(d) => d
            .angles
            .iter()
            .zip(&d.samples)
            .map(|(&theta, s)| entry(json!({ "theta": theta }), s))
            .collect(),
        Dataset::Het(d) => {
            let x: Vec<f64> = d.pairs.iter().map(|p| p[0]).collect();
            let p: Vec<f64> = d.pairs.iter().map(|p| p[1]).collect();
            vec![
                entry(json!({ "axis": "x" }), &x),
                entry(json!({ "axis": "p" }), &p),
            ]
        }
    };
    let all = |key: &str| {
        entries
            .iter()
            .all(|e| e["report"][key].as_bool().unwrap_or(false))
    };
    let doc = json!({
        "scheme": file.dataset.scheme(),
        "bins": bins,
        "all_pass_95": all("pass_95"),
        "all_pass_99": all("pass_99"),
        "failed_bins": entries.iter().filter(|e| e.get("error").is_some()).count(),
        "entries": entries,
        "input": file.dataset.meta(),
        "provenance": prov,
    });
    Ok(vec![json_artifact(&doc)])
}

/// Extracts the embedded provenance of any file this tool writes, plus the
/// format the file was written in.
pub fn embedded_provenance(bytes: &[u8]) -> Result<(Value, Format), CliError> {
    let bad = |m: &str| CliError::Validation(m.to_string());
    if bytes.starts_with(BINARY_MAGIC)
        || bytes.starts_with(format!("# {FORMAT_TAG}, scheme=").as_bytes())
    {
        let file = read_dataset(bytes)?;
        let format = if bytes.starts_with(BINARY_MAGIC) {
            Format::Bin
        } else {
            Format::Csv
        };
        return Ok((file.provenance, format));
    }
    if bytes.first() == Some(&b'{') {
        let v: Value = serde_json::from_slice(bytes)
            .map_err(|e| CliError::Validation(format!("invalid json: {e}")))?;
        let prov = v
            .get("provenance")
            .cloned()
            .ok_or_else(|| bad("no provenance block"))?;
        return Ok((prov, Format::Json));
    }
    let text = std::str::from_utf8(bytes).map_err(|_| bad("unrecognized file type"))?;
    if text.starts_with(&format!("# {FORMAT_TAG}, kind=")) {
        let line = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix("# provenance="))
            .ok_or_else(|| bad("no provenance line"))?;
        let prov = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("provenance line: {e}")))?;
        return Ok((prov, Format::Csv));
    }
    Err(bad("unrecognized file type"))
}

pub struct Verified {
    pub hash: String,
    pub seed: u64,
    pub reproduced: Option<usize>,
}

/// Re-derives the config hash of `path` and optionally re-runs the config.
pub fn verify(path: &Path, rerun: bool) -> Result<Verified, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let (prov, format) = embedded_provenance(&bytes)?;
    let cfg: RunConfig = serde_json::from_value(prov.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| CliError::Validation(format!("embedded config unreadable: {e}")))?;
    let embedded = prov["config_sha256"].as_str().unwrap_or_default();
    let recomputed = cfg.hash();
    if embedded != recomputed {
        return Err(CliError::Validation(format!(
            "config hash mismatch: embedded {embedded}, recomputed {recomputed}"
        )));
    }
    if prov["seed"].as_u64() != Some(cfg.seed) {
        return Err(CliError::Validation(format!(
            "seed mismatch: embedded {}, config {}",
            prov["seed"], cfg.seed
        )));
    }
    let reproduced = if rerun {
        let artifacts = run(&cfg)?;
        let fresh = artifacts
            .iter()
            .find(|a| a.format == format)
            .ok_or_else(|| {
                CliError::Validation("re-run produced no artifact of this format".into())
            })?;
        if fresh.bytes != bytes {
            return Err(CliError::Validation(format!(
                "re-run output differs from {} ({} vs {} bytes)",
                path.display(),
                fresh.bytes.len(),
                bytes.len()
            )));
        }
        Some(bytes.len())
    } else {
        None
    };
    Ok(Verified {
        hash: recomputed,
        seed: cfg.seed,
        reproduced,
    })
}
