//! Command-line driver. Results go to stdout and files; diagnostics and errors to stderr.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 solver or numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiment::{gradcheck, gradcheck_config_2d, gradcheck_config_3d, run_reconstruction, simulate, sweep};
use crate::io::{read_dataset, write_dataset, write_image, write_sweep, write_telemetry};
use crate::optim::Method;
use crate::phantom::snr_db;

pub const THREADS_ENV: &str = "DIFFRACT_THREADS";

#[derive(Parser, Debug)]
#[command(name = "diffract", version, about = "Nonlinear diffractive imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the phantom and simulate measurements.
    Simulate(Common),
    /// Reconstruct from a dataset (or from freshly simulated data).
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV written by `simulate`; simulates from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides the config method.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Compare the adjoint gradient with central finite differences.
    Gradcheck {
        /// Defaults to a built-in 16×16 (or 6³ with `--dim 3`) problem.
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        coords: usize,
        /// Finite-difference step relative to the phantom contrast.
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the ground-truth image.
    Phantom(Common),
    /// SNR of each method across the configured contrasts.
    Sweep(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", common.config.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.output {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn prepare(dir: &Path, config: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), config.to_json()?)?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::InvalidArgument(format!("{THREADS_ENV} must be positive")));
        }
        // a pool may already exist when called as a library; keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(common) => {
            let config = load(&common)?;
            let dir = config.output_dir.clone();
            prepare(&dir, &config)?;
            let (phantom, ds) = simulate(&config)?;
            let grid = config.grid.build()?;
            write_image(&dir, "phantom", &grid, &phantom.values, &config.slices)?;
            let path = dir.join("data.csv");
            write_dataset(&path, &ds, grid.dim())?;
            println!("wrote {} ({} measurements)", path.display(), ds.layout.total_measurements());
        }
        Command::Reconstruct { common, data, method } => {
            let mut config = load(&common)?;
            if let Some(m) = method {
                config.method = m;
            }
            config.validate()?;
            let dir = config.output_dir.clone();
            prepare(&dir, &config)?;
            let grid = config.grid.build()?;
            let (truth, ds) = match &data {
                Some(path) => {
                    let (ds, dim) = read_dataset(path)?;
                    if dim != grid.dim() {
                        return Err(Error::config("grid.dim", format!("dataset is {dim}D")));
                    }
                    (None, ds)
                }
                None => {
                    let (p, ds) = simulate(&config)?;
                    (Some(p), ds)
                }
            };
            let rec = run_reconstruction(&config, &ds)?;
            write_image(&dir, "image", &grid, rec.image.values(), &config.slices)?;
            write_telemetry(&dir.join("telemetry.csv"), &rec.telemetry)?;
            let last = rec.telemetry.last();
            println!(
                "{}: {} iterations, F = {:.6e}, gamma = {:.6e}{}",
                config.method,
                rec.telemetry.len(),
                last.map_or(f64::NAN, |r| r.objective),
                rec.gamma,
                if rec.converged { " (converged)" } else { "" }
            );
            if let Some(p) = truth {
                println!("snr = {:.3} dB", snr_db(rec.image.values(), &p.values)?);
            }
        }
        Command::Gradcheck {
            config,
            dim,
            coords,
            step,
            tolerance,
            seed,
        } => {
            let mut cfg = match (&config, dim) {
                (Some(path), _) => parse_config(
                    &fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?,
                )?,
                (None, 2) => gradcheck_config_2d(),
                (None, 3) => gradcheck_config_3d(),
                (None, d) => return Err(Error::InvalidArgument(format!("--dim must be 2 or 3, got {d}"))),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = gradcheck(&cfg, coords, step)?;
            for e in &report.entries {
                println!(
                    "n={:<6} adjoint={:+.10e} fd={:+.10e} rel={:.3e}",
                    e.index, e.adjoint, e.finite_difference, e.relative_error
                );
            }
            println!("max relative error = {:.3e}", report.max_relative_error);
            if !(report.max_relative_error <= tolerance) {
                eprintln!("gradient check failed: {:.3e} > {tolerance:e}", report.max_relative_error);
                return Ok(2);
            }
        }
        Command::Phantom(common) => {
            let config = load(&common)?;
            let dir = config.output_dir.clone();
            prepare(&dir, &config)?;
            let grid = config.grid.build()?;
            let phantom = config.phantom.build(&grid)?;
            for f in write_image(&dir, "phantom", &grid, &phantom.values, &config.slices)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Sweep(common) => {
            let config = load(&common)?;
            let dir = config.output_dir.clone();
            prepare(&dir, &config)?;
            println!("contrast  method  tau_rel   snr_db");
            let rows = sweep(&config, |r| {
                println!("{:<9} {:<7} {:<9.1e} {:.3}", r.contrast, r.method.to_string(), r.tau_rel, r.snr_db)
            })?;
            write_sweep(&dir.join("sweep.csv"), &rows)?;
        }
    }
    Ok(0)
}

/// Parses `argv` (including the program name) and runs the command; returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_solver_failure() {
                2
            } else {
                1
            }
        }
    }
}
