//! Dataset and report file formats.
//!
//! Text datasets are CSV preceded by a versioned comment header:
//!
//! ```text
//! # gauss-tomo v1, scheme=hom, seed=42, eta=1
//! # meta={...json...}
//! theta,x
//! 0,0.8414...
//! ```
//!
//! Heterodyne files use `scheme=het` and `x,p` rows. The binary form starts
//! with the magic `GTOMOBIN`, a little-endian `u64` length and the same two
//! header lines, followed by little-endian `f64` payload:
//! homodyne `u64 angles, { f64 theta, u64 n, n * f64 }`; heterodyne
//! `u64 n, n * (f64 x, f64 p)`.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::benchmark::{BenchmarkReport, GammaCell};
use crate::error::{Result, TomoError};
use crate::estimation::{EstimateResult, Scheme};
use crate::sampling::{DatasetMeta, HeterodyneDataset, HomodyneDataset};

pub const FORMAT_TAG: &str = "gauss-tomo v1";
pub const BINARY_MAGIC: &[u8; 8] = b"GTOMOBIN";

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Hom(HomodyneDataset),
    Het(HeterodyneDataset),
}

impl Dataset {
    pub fn scheme(&self) -> Scheme {
        match self {
            Dataset::Hom(_) => Scheme::Hom,
            Dataset::Het(_) => Scheme::Het,
        }
    }

    pub fn meta(&self) -> &DatasetMeta {
        match self {
            Dataset::Hom(d) => &d.meta,
            Dataset::Het(d) => &d.meta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Dataset::Hom(d) => d.validate(),
            Dataset::Het(d) => d.validate(),
        }
    }
}

/// A dataset plus free-form provenance (resolved run config, hashes).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub dataset: Dataset,
    pub provenance: Value,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: DatasetMeta,
    #[serde(default)]
    provenance: Value,
}

fn header_lines(file: &DatasetFile) -> Result<String> {
    let meta = file.dataset.meta();
    let line = serde_json::to_string(&MetaLine {
        meta: meta.clone(),
        provenance: file.provenance.clone(),
    })
    .map_err(|e| TomoError::Io(e.to_string()))?;
    Ok(format!(
        "# {FORMAT_TAG}, scheme={}, seed={}, eta={}\n# meta={line}\n",
        file.dataset.scheme(),
        meta.seed,
        meta.detection.eta
    ))
}

pub fn write_dataset_csv<W: Write>(w: W, file: &DatasetFile) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    w.write_all(header_lines(file)?.as_bytes())?;
    match &file.dataset {
        Dataset::Hom(d) => {
            writeln!(w, "theta,x")?;
            for (theta, xs) in d.angles.iter().zip(&d.samples) {
                for x in xs {
                    writeln!(w, "{theta},{x}")?;
                }
            }
        }
        Dataset::Het(d) => {
            writeln!(w, "x,p")?;
            for [x, p] in &d.pairs {
                writeln!(w, "{x},{p}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_bin<W: Write>(w: W, file: &DatasetFile) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    let header = header_lines(file)?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    match &file.dataset {
        Dataset::Hom(d) => {
            w.write_all(&(d.angles.len() as u64).to_le_bytes())?;
            for (theta, xs) in d.angles.iter().zip(&d.samples) {
                w.write_all(&theta.to_le_bytes())?;
                w.write_all(&(xs.len() as u64).to_le_bytes())?;
                for x in xs {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Dataset::Het(d) => {
            w.write_all(&(d.pairs.len() as u64).to_le_bytes())?;
            for [x, p] in &d.pairs {
                w.write_all(&x.to_le_bytes())?;
                w.write_all(&p.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> TomoError {
    TomoError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse the two header lines; returns scheme, meta and provenance.
fn parse_header(first: &str, second: &str) -> Result<(Scheme, DatasetMeta, Value)> {
    let rest = first
        .strip_prefix("# ")
        .and_then(|r| r.strip_prefix(FORMAT_TAG))
        .ok_or_else(|| parse_err(1, format!("expected header starting with `# {FORMAT_TAG}`")))?;
    let scheme_field = rest
        .split(',')
        .map(str::trim)
        .find_map(|kv| kv.strip_prefix("scheme="))
        .ok_or_else(|| parse_err(1, "header lacks scheme="))?;
    let scheme: Scheme = scheme_field.parse()?;
    let json_text = second
        .strip_prefix("# meta=")
        .ok_or_else(|| parse_err(2, "expected `# meta=` line"))?;
    let parsed: MetaLine =
        serde_json::from_str(json_text).map_err(|e| parse_err(2, format!("bad meta json: {e}")))?;
    Ok((scheme, parsed.meta, parsed.provenance))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("not a number: `{s}`")))
}

fn read_csv<R: BufRead>(r: R) -> Result<DatasetFile> {
    let mut lines = r.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(parse_err(i + 1, e.to_string())),
            None => Err(parse_err(
                0,
                format!("empty or truncated file: missing {what}"),
            )),
        }
    };
    let (_, first) = next_line("header")?;
    let (_, second) = next_line("meta line")?;
    let (scheme, meta, provenance) = parse_header(&first, &second)?;
    let (col_line, columns) = next_line("column header")?;
    let expected_cols = match scheme {
        Scheme::Hom => "theta,x",
        Scheme::Het => "x,p",
    };
    if columns.trim() != expected_cols {
        return Err(parse_err(
            col_line,
            format!("expected columns `{expected_cols}`, got `{columns}`"),
        ));
    }

    let dataset = match scheme {
        Scheme::Hom => {
            let mut angles: Vec<f64> = Vec::new();
            let mut samples: Vec<Vec<f64>> = Vec::new();
            for (i, l) in lines {
                let no = i + 1;
                let l = l.map_err(|e| parse_err(no, e.to_string()))?;
                if l.trim().is_empty() {
                    continue;
                }
                let (t, x) = l
                    .split_once(',')
                    .ok_or_else(|| parse_err(no, "expected two columns"))?;
                let theta = parse_f64(t, no)?;
                let x = parse_f64(x, no)?;
                match angles.last() {
                    Some(&last) if last == theta => samples.last_mut().unwrap().push(x),
                    Some(&last) if theta < last => {
                        return Err(parse_err(no, "angles must be grouped in increasing order"))
                    }
                    _ => {
                        angles.push(theta);
                        samples.push(vec![x]);
                    }
                }
            }
            if angles.is_empty() {
                return Err(parse_err(0, "dataset has no rows"));
            }
            Dataset::Hom(HomodyneDataset {
                angles,
                samples,
                meta,
            })
        }
        Scheme::Het => {
            let mut pairs = Vec::new();
            for (i, l) in lines {
                let no = i + 1;
                let l = l.map_err(|e| parse_err(no, e.to_string()))?;
                if l.trim().is_empty() {
                    continue;
                }
                let (x, p) = l
                    .split_once(',')
                    .ok_or_else(|| parse_err(no, "expected two columns"))?;
                pairs.push([parse_f64(x, no)?, parse_f64(p, no)?]);
            }
            if pairs.is_empty() {
                return Err(parse_err(0, "dataset has no rows"));
            }
            Dataset::Het(HeterodyneDataset { pairs, meta })
        }
    };
    dataset.validate()?;
    Ok(DatasetFile {
        dataset,
        provenance,
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| TomoError::Io(format!("truncated binary dataset: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_bin<R: Read>(mut r: R) -> Result<DatasetFile> {
    let len = read_u64(&mut r)? as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)
        .map_err(|e| TomoError::Io(format!("truncated binary header: {e}")))?;
    let header = String::from_utf8(header).map_err(|_| parse_err(1, "header is not UTF-8"))?;
    let mut hl = header.lines();
    let (scheme, meta, provenance) =
        parse_header(hl.next().unwrap_or(""), hl.next().unwrap_or(""))?;
    let dataset = match scheme {
        Scheme::Hom => {
            let m = read_u64(&mut r)? as usize;
            let mut angles = Vec::with_capacity(m);
            let mut samples = Vec::with_capacity(m);
            for _ in 0..m {
                angles.push(read_f64(&mut r)?);
                let n = read_u64(&mut r)? as usize;
                let xs = (0..n)
                    .map(|_| read_f64(&mut r))
                    .collect::<Result<Vec<_>>>()?;
                samples.push(xs);
            }
            Dataset::Hom(HomodyneDataset {
                angles,
                samples,
                meta,
            })
        }
        Scheme::Het => {
            let n = read_u64(&mut r)? as usize;
            let pairs = (0..n)
                .map(|_| Ok([read_f64(&mut r)?, read_f64(&mut r)?]))
                .collect::<Result<Vec<_>>>()?;
            Dataset::Het(HeterodyneDataset { pairs, meta })
        }
    };
    dataset.validate()?;
    Ok(DatasetFile {
        dataset,
        provenance,
    })
}

/// Read either format, detected from the leading bytes.
pub fn read_dataset<R: Read>(r: R) -> Result<DatasetFile> {
    let mut r = BufReader::new(r);
    let head = r.fill_buf()?;
    if head.is_empty() {
        return Err(parse_err(0, "empty file"));
    }
    if head.starts_with(BINARY_MAGIC) {
        r.consume(BINARY_MAGIC.len());
        read_bin(r)
    } else {
        read_csv(r)
    }
}

pub fn read_dataset_path(path: &std::path::Path) -> Result<DatasetFile> {
    let f =
        std::fs::File::open(path).map_err(|e| TomoError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(f)
}

/// JSON record for an estimate: covariance, extracted parameters,
/// diagnostics and the input dataset's metadata.
pub fn estimate_record(r: &EstimateResult, input: &DatasetMeta, provenance: &Value) -> Value {
    let g = &r.g_w_hat;
    let params = r.params().ok();
    json!({
        "scheme": r.scheme,
        "g11": g.g11,
        "g12": g.g12,
        "g22": g.g22,
        "mu": params.map(|p| p.mu),
        "lambda": params.map(|p| p.lambda),
        "orientation": params.map(|p| p.orientation),
        "diagnostics": r.diagnostics,
        "input": input,
        "provenance": provenance,
    })
}

pub const BENCHMARK_CSV_HEADER: &str =
    "mu,lambda,scheme,N,m,dhs_mean,dhs_stderr,gamma,gamma_analytic";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Flat CSV: one homodyne and one heterodyne row per `(N, m)`, the
/// heterodyne statistics repeated across `m`.
pub fn benchmark_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from(BENCHMARK_CSV_HEADER);
    out.push('\n');
    let s = &report.config.state;
    for g in &report.gammas {
        for (scheme, m) in [(Scheme::Hom, Some(g.angle_count)), (Scheme::Het, None)] {
            if let Some(c) = report.cell(scheme, g.sample_size, m) {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    s.mu,
                    s.lambda,
                    scheme,
                    g.sample_size,
                    g.angle_count,
                    c.dhs_mean,
                    c.dhs_stderr,
                    opt(g.gamma_empirical),
                    g.gamma_analytic
                ));
            }
        }
    }
    out
}

pub const GAMMA_MAP_CSV_HEADER: &str = "mu,lambda,gamma,gamma_stderr,gamma_analytic";

pub fn gamma_map_csv(cells: &[GammaCell]) -> String {
    let mut out = String::from(GAMMA_MAP_CSV_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.mu,
            c.lambda,
            opt(c.gamma),
            opt(c.gamma_stderr),
            opt(c.gamma_analytic)
        ));
    }
    out
}
