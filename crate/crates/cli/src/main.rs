// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use pss_core::config::Config;
use pss_core::fluctuation::{propagate_covariance, simulate_limit_ensemble};
use pss_core::io::{
    write_covariance_csv, write_ensemble_dir, write_gaussian_paths_csv, write_json, write_meanfield_csv,
};
use pss_core::meanfield::integrate;
use pss_core::simulate::{run_ensemble, uniform_grid, EventRetention, RunOptions};
use pss_core::validate::run_suite;
use pss_core::{FluctuationModel, InitialCondition, ModelSpec};

/// Cyclic n-species collision model: exact simulation, deterministic
/// limit, Gaussian fluctuations and validation.
#[derive(Parser)]
#[command(name = "pss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of exact trajectories.
    Simulate(SimulateArgs),
    /// Integrate the mean-field ODE.
    Meanfield(MeanfieldArgs),
    /// Propagate the fluctuation covariance and sample limit paths.
    Fluctuation(FluctuationArgs),
    /// Run the validation suite and write report.json.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Initial counts, comma separated (one per species).
    #[arg(long, value_delimiter = ',', required = true)]
    initial: Vec<i64>,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the full event log of every replica.
    #[arg(long)]
    events: bool,
    #[arg(long, default_value_t = 1_000_000_000)]
    max_events: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OdeArgs {
    /// Initial fractions, comma separated; normalized to sum to one.
    #[arg(long, value_delimiter = ',', required = true)]
    u0: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
}

#[derive(Args)]
struct MeanfieldArgs {
    #[command(flatten)]
    ode: OdeArgs,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FluctuationArgs {
    #[command(flatten)]
    ode: OdeArgs,
    /// Covariance of V(0), n*n entries row-major (default: zero).
    #[arg(long, value_delimiter = ',')]
    sigma0: Option<Vec<f64>>,
    /// Number of limit-SDE paths to sample.
    #[arg(long, default_value_t = 0)]
    paths: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// TOML configuration (defaults if omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn normalized(u: &[f64]) -> Result<Vec<f64>> {
    let s: f64 = u.iter().sum();
    if !(s > 0.0) || u.iter().any(|x| !(*x >= 0.0)) {
        bail!("--u0 must be non-negative with a positive sum");
    }
    Ok(u.iter().map(|x| x / s).collect())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = ModelSpec::new(a.lambda, &a.initial)?;
    let options = RunOptions {
        retention: if a.events {
            EventRetention::Always
        } else {
            EventRetention::Never
        },
        max_events: a.max_events,
        threads: a.threads,
    };
    let grid = uniform_grid(a.t_end, a.grid_points);
    let ensemble = run_ensemble(&spec, a.replicas, a.t_end, &grid, a.seed, &options)?;
    let manifest = write_ensemble_dir(&a.out, &ensemble, a.events)?;
    eprintln!(
        "{} replicas written to {} ({} absorbed)",
        manifest.replicas,
        a.out.display(),
        manifest.absorption.absorbed
    );
    Ok(())
}

fn meanfield(a: MeanfieldArgs) -> Result<()> {
    let u0 = normalized(&a.ode.u0)?;
    let grid = uniform_grid(a.ode.t_end, a.ode.grid_points);
    let path = integrate(&u0, a.ode.lambda, a.ode.t_end, a.ode.step, &grid)?;
    for w in &path.warnings {
        eprintln!("warning: {w:?}");
    }
    match a.out {
        Some(p) => write_meanfield_csv(create(&p)?, &path)?,
        None => write_meanfield_csv(io::stdout().lock(), &path)?,
    }
    Ok(())
}

fn fluctuation(a: FluctuationArgs) -> Result<()> {
    let u0 = normalized(&a.ode.u0)?;
    let n = u0.len();
    let grid = uniform_grid(a.ode.t_end, a.ode.grid_points);
    let path = integrate(&u0, a.ode.lambda, a.ode.t_end, a.ode.step, &grid)?;
    let sigma0 = match &a.sigma0 {
        Some(s) if s.len() == n * n => DMatrix::from_row_slice(n, n, s),
        Some(s) => bail!("--sigma0 needs {} entries, got {}", n * n, s.len()),
        None => DMatrix::zeros(n, n),
    };
    let model = FluctuationModel::new(path.clone(), a.ode.lambda);
    let covariance = propagate_covariance(&model, &sigma0, a.ode.step)?;

    std::fs::create_dir_all(&a.out)?;
    write_meanfield_csv(create(&a.out.join("meanfield.csv"))?, &path)?;
    write_covariance_csv(create(&a.out.join("covariance.csv"))?, &covariance)?;
    if a.paths > 0 {
        let v0 = if sigma0.iter().all(|x| *x == 0.0) {
            InitialCondition::zero(n)
        } else {
            InitialCondition::Gaussian {
                mean: vec![0.0; n],
                covariance: sigma0,
            }
        };
        let paths = simulate_limit_ensemble(&model, &v0, a.ode.step, &path.grid, a.paths, a.seed, a.threads)?;
        write_gaussian_paths_csv(create(&a.out.join("paths.csv"))?, &paths)?;
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<bool> {
    let mut config = match &a.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    if a.threads.is_some() {
        config.run.threads = a.threads;
    }
    let report = run_suite(&config)?;
    std::fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;

    let mut out = io::stdout().lock();
    let line = |name: &str, pass: Option<bool>| match pass {
        Some(true) => format!("{name:<12} PASS"),
        Some(false) => format!("{name:<12} FAIL"),
        None => format!("{name:<12} skipped"),
    };
    writeln!(out, "{}", line("lln", report.lln.as_ref().map(|r| r.pass)))?;
    writeln!(out, "{}", line("clt", report.clt.as_ref().map(|r| r.pass)))?;
    writeln!(
        out,
        "{}",
        line("martingale", report.martingale.as_ref().map(|r| r.pass))
    )?;
    writeln!(out, "{}", line("gillespie", report.gillespie.as_ref().map(|r| r.pass)))?;
    writeln!(out, "{}", line("sde", report.sde.as_ref().map(|r| r.pass)))?;
    Ok(report.pass)
}

fn create(p: &Path) -> Result<File> {
    File::create(p).with_context(|| format!("creating {}", p.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Meanfield(a) => meanfield(a).map(|_| true),
        Command::Fluctuation(a) => fluctuation(a).map(|_| true),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
