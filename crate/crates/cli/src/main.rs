//! `gauss-tomo` command-line front end.
//!
//! Exit codes: 0 success, 2 validation, 3 numerical failure, 4 I/O.
//! Diagnostics go to stderr as `gauss-tomo: error kind=<kind> code=<n>: <message>`.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Artifact;
use crate::config::{
    apply_fig3b_preset, apply_fig4_preset, read_file_config, Command, Format, Grid, Method,
    NamedState, RunConfig, SchemeArg,
};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "gauss-tomo",
    version,
    about = "Homodyne vs heterodyne Gaussian-state tomography"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic homodyne or heterodyne dataset.
    Simulate(RunArgs),
    /// Reconstruct the Wigner covariance of a dataset.
    Estimate(RunArgs),
    /// Monte Carlo accuracy comparison of both schemes.
    Benchmark(RunArgs),
    /// Gamma over a (mu, lambda) grid.
    GammaMap(RunArgs),
    /// Goodness-of-fit battery per angle bin or per axis.
    Gaussianity(RunArgs),
    /// Check the embedded config hash of an output file.
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// Input dataset (estimate, gaussianity).
    input: Option<String>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long = "lambda")]
    lambda: Option<f64>,
    #[arg(long)]
    orientation: Option<f64>,
    /// Named state preset.
    #[arg(long, value_enum)]
    state: Option<NamedState>,
    /// Angle count; a comma-separated list for benchmark.
    #[arg(long, value_delimiter = ',')]
    angles: Vec<usize>,
    /// Sampling events; a comma-separated list for benchmark.
    #[arg(long, value_delimiter = ',')]
    samples: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    thermalize: bool,
    #[arg(long)]
    analytic: bool,
    #[arg(long)]
    exact_truth: bool,
    /// Three-decade benchmark with m in {5, 10, 15}.
    #[arg(long)]
    paper_fig4: bool,
    /// Use the workstation-sized reference with --paper-fig4.
    #[arg(long)]
    scaled: bool,
    /// Gamma map over the measured (mu, lambda) region.
    #[arg(long)]
    paper_fig3b: bool,
    /// Gamma-map grid as MUxLAMBDA, e.g. 20x20.
    #[arg(long)]
    grid: Option<Grid>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    file: PathBuf,
    /// Re-run the embedded config and compare output bytes.
    #[arg(long)]
    rerun: bool,
    #[arg(long)]
    threads: Option<usize>,
}

struct Resolved {
    cfg: RunConfig,
    out: Option<PathBuf>,
    threads: usize,
}

fn only_for(set: bool, flag: &str, allowed: &[Command], cmd: Command) -> Result<(), CliError> {
    if set && !allowed.contains(&cmd) {
        return Err(CliError::Validation(format!(
            "{flag} does not apply to {cmd}"
        )));
    }
    Ok(())
}

fn single(values: &[usize], flag: &str) -> Result<Option<usize>, CliError> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => Err(CliError::Validation(format!("{flag} takes one value here"))),
    }
}

fn resolve(cmd: Command, a: RunArgs) -> Result<Resolved, CliError> {
    use Command::*;
    only_for(
        a.input.is_some(),
        "an input path",
        &[Estimate, Gaussianity],
        cmd,
    )?;
    only_for(a.thermalize, "--thermalize", &[Simulate], cmd)?;
    only_for(a.scheme.is_some(), "--scheme", &[Simulate], cmd)?;
    only_for(a.method.is_some(), "--method", &[Estimate], cmd)?;
    only_for(a.bins.is_some(), "--bins", &[Gaussianity], cmd)?;
    only_for(a.exact_truth, "--exact-truth", &[Benchmark], cmd)?;
    only_for(a.paper_fig4, "--paper-fig4", &[Benchmark], cmd)?;
    only_for(a.scaled, "--scaled", &[Benchmark], cmd)?;
    only_for(a.paper_fig3b, "--paper-fig3b", &[GammaMap], cmd)?;
    only_for(a.analytic, "--analytic", &[GammaMap], cmd)?;
    only_for(a.grid.is_some(), "--grid", &[GammaMap], cmd)?;
    only_for(a.reps.is_some(), "--reps", &[Benchmark, GammaMap], cmd)?;
    only_for(
        !a.angles.is_empty(),
        "--angles",
        &[Simulate, Benchmark, GammaMap],
        cmd,
    )?;
    only_for(
        !a.samples.is_empty(),
        "--samples",
        &[Simulate, Benchmark, GammaMap],
        cmd,
    )?;
    let state_flags =
        a.mu.is_some() || a.lambda.is_some() || a.orientation.is_some() || a.state.is_some();
    only_for(state_flags, "state flags", &[Simulate, Benchmark], cmd)?;
    if a.scaled && !a.paper_fig4 {
        return Err(CliError::Validation(
            "--scaled requires --paper-fig4".into(),
        ));
    }

    let (mut cfg, mut out, mut threads) = match &a.config {
        Some(path) => {
            let file = read_file_config(path)?;
            let (out, threads) = (file.out.clone(), file.threads);
            (RunConfig::from_file(cmd, file), out, threads.unwrap_or(0))
        }
        None => (RunConfig::defaults(cmd), None, 0),
    };

    if a.paper_fig4 {
        apply_fig4_preset(&mut cfg, a.scaled);
    }
    if a.paper_fig3b {
        apply_fig3b_preset(&mut cfg);
    }
    if let Some(s) = a.state {
        let (mu, lambda) = s.params();
        cfg.state.mu = mu;
        cfg.state.lambda = lambda;
        cfg.state.orientation = 0.0;
    }

    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.eta {
        cfg.detection.eta = Some(v);
    }
    if let Some(v) = a.mu {
        cfg.state.mu = v;
    }
    if let Some(v) = a.lambda {
        cfg.state.lambda = v;
    }
    if let Some(v) = a.orientation {
        cfg.state.orientation = v;
    }
    if let Some(v) = a.format {
        cfg.format = v;
    }
    match cmd {
        Simulate => {
            let s = &mut cfg.simulate;
            if let Some(v) = single(&a.angles, "--angles")? {
                s.angles = v;
            }
            if let Some(v) = single(&a.samples, "--samples")? {
                s.samples = v;
            }
            if let Some(v) = a.scheme {
                s.scheme = v;
            }
            s.thermalize |= a.thermalize;
        }
        Estimate => {
            if a.input.is_some() {
                cfg.estimate.input = a.input;
            }
            if let Some(m) = a.method {
                cfg.estimate.method = m;
            }
        }
        Benchmark => {
            let b = &mut cfg.benchmark;
            if !a.angles.is_empty() {
                b.angle_counts = a.angles;
            }
            if !a.samples.is_empty() {
                b.sample_sizes = a.samples;
            }
            if let Some(v) = a.reps {
                b.repetitions = v;
            }
            b.exact_truth |= a.exact_truth;
        }
        GammaMap => {
            let g = &mut cfg.gamma_map;
            if let Some(v) = single(&a.angles, "--angles")? {
                g.angles = v;
            }
            if let Some(v) = single(&a.samples, "--samples")? {
                g.samples = v;
            }
            if let Some(v) = a.reps {
                g.repetitions = v;
            }
            if let Some(Grid(v)) = a.grid {
                g.grid = v;
            }
            g.analytic |= a.analytic;
        }
        Gaussianity => {
            if a.input.is_some() {
                cfg.gaussianity.input = a.input;
            }
            if let Some(b) = a.bins {
                cfg.gaussianity.bins = b;
            }
        }
    }
    if a.out.is_some() {
        out = a.out;
    }
    if let Some(t) = a.threads {
        threads = t;
    }
    cfg.validate()?;
    Ok(Resolved { cfg, out, threads })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Benchmark writes every artifact next to `--out` with its own extension;
/// other commands write the single artifact in the configured format.
fn emit(cfg: &RunConfig, out: Option<&Path>, artifacts: &[Artifact]) -> Result<(), CliError> {
    match out {
        Some(path) if cfg.command == Command::Benchmark => {
            for a in artifacts {
                write_file(&path.with_extension(a.format.extension()), &a.bytes)?;
            }
        }
        Some(path) => {
            let a = pick(cfg, artifacts);
            write_file(path, &a.bytes)?;
            if cfg.command == Command::Estimate {
                std::io::stdout().write_all(&a.bytes)?;
            }
        }
        None => std::io::stdout().write_all(&pick(cfg, artifacts).bytes)?,
    }
    Ok(())
}

fn pick<'a>(cfg: &RunConfig, artifacts: &'a [Artifact]) -> &'a Artifact {
    artifacts
        .iter()
        .find(|a| a.format == cfg.format)
        .unwrap_or(&artifacts[0])
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(format!("worker pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (cmd, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Estimate(a) => (Command::Estimate, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
        Cmd::GammaMap(a) => (Command::GammaMap, a),
        Cmd::Gaussianity(a) => (Command::Gaussianity, a),
        Cmd::Verify(v) => {
            let r = pool(v.threads.unwrap_or(0))?.install(|| commands::verify(&v.file, v.rerun))?;
            print!("ok config_sha256={} seed={}", r.hash, r.seed);
            match r.reproduced {
                Some(n) => println!(" reproduced={n}B"),
                None => println!(),
            }
            return Ok(());
        }
    };
    let r = resolve(cmd, args)?;
    let artifacts = pool(r.threads)?.install(|| commands::run(&r.cfg))?;
    emit(&r.cfg, r.out.as_deref(), &artifacts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "gauss-tomo: error kind={} code={}: {}",
                e.kind(),
                e.exit_code(),
                e.message()
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
