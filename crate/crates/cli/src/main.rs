use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gdpc::bench::{run_benchmark, write_outputs, BenchConfig};
use gdpc::gdpc::reconstruct;
use gdpc::io::{read_panel_file, write_matrix_file};
use gdpc::{fit_fhlr, fit_gdpc, fit_sw, simulate, GdpcOptions, Method, ScenarioName};
use nalgebra::DMatrix;

#[derive(Parser)]
#[command(name = "gdpc", version, about = "Dynamic factor common-part estimation and Monte Carlo benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator to a panel CSV and write the reconstruction.
    Fit(FitArgs),
    /// Draw a panel from one of the simulation designs.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo benchmark described by a JSON config.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Number of lags of the dynamic principal component.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value = "gdpc")]
    method: Method,
    #[arg(long, default_value_t = GdpcOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = GdpcOptions::default().max_iter)]
    max_iter: usize,
    /// Dynamic factors (FHLR only).
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// Static factors (SW and FHLR); defaults to k + 1.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    output_reconstruction: PathBuf,
    /// Fitted factor path (GDPC only).
    #[arg(long)]
    output_factor: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: ScenarioName,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_z: PathBuf,
    #[arg(long)]
    out_chi: Option<PathBuf>,
}

fn fit(args: FitArgs) -> Result<()> {
    if args.method != Method::Gdpc && args.output_factor.is_some() {
        bail!("--output-factor is only available for the gdpc method");
    }
    let (names, z) = read_panel_file(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let r = args.r.unwrap_or(args.k + 1);
    let chi_hat = match args.method {
        Method::Gdpc => {
            let opts = GdpcOptions {
                tol: args.tol,
                max_iter: args.max_iter,
                ..Default::default()
            };
            let fit = fit_gdpc(&z, args.k, &opts)?;
            eprintln!(
                "mse {:.6e} after {} iterations (converged: {})",
                fit.mse, fit.iterations, fit.converged
            );
            if let Some(path) = &args.output_factor {
                let f = DMatrix::from_column_slice(fit.f.len(), 1, fit.f.as_slice());
                write_matrix_file(path, Some(&["f".to_owned()]), &f)?;
            }
            reconstruct(&fit)
        }
        Method::Sw => fit_sw(&z, r)?.chi_hat,
        Method::Fhlr => fit_fhlr(&z, args.q, r)?.chi_hat,
    };
    write_matrix_file(&args.output_reconstruction, Some(&names), &chi_hat)?;
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let panel = simulate(args.scenario.scenario(), args.t, args.m, args.seed)?;
    write_matrix_file(&args.out_z, None, panel.z.values())?;
    if let Some(path) = &args.out_chi {
        write_matrix_file(path, None, &panel.chi)?;
    }
    Ok(())
}

fn benchmark(config_path: PathBuf) -> Result<ExitCode> {
    let mut config = BenchConfig::from_file(&config_path)
        .with_context(|| format!("loading {}", config_path.display()))?;
    config.apply_env_overrides()?;
    let result = run_benchmark(&config)?;
    let (csv, md) = write_outputs(&result, &config)?;
    eprintln!("wrote {} and {}", csv.display(), md.display());
    for row in result.rows.iter().filter(|r| r.flagged) {
        eprintln!(
            "flagged: {} T={} m={} {} ({} of {} replications failed)",
            row.scenario,
            row.t,
            row.m,
            row.method,
            row.failed_reps,
            row.failed_reps + row.n_reps
        );
    }
    for failure in &result.failures {
        eprintln!("failed: {failure}");
    }
    for c in &result.checks {
        if c.idio_violations + c.sw_violations > 0 {
            eprintln!(
                "inequality violations: {} T={} m={}: {} idiosyncratic bound, {} static-PC bound",
                c.scenario, c.t, c.m, c.idio_violations, c.sw_violations
            );
        }
    }
    Ok(if result.total_failures() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Fit(args) => fit(args).map(|_| ExitCode::SUCCESS),
        Command::Simulate(args) => simulate_cmd(args).map(|_| ExitCode::SUCCESS),
        Command::Benchmark { config } => benchmark(config),
    }
}
