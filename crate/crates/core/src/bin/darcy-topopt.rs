use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use darcy_topopt::app::{check_gradient, load_config, run_analyze, run_optimize, RunOptions};
use darcy_topopt::materials::{tune_fluid_permeability, TuningInputs};

#[derive(Parser)]
#[command(version, about = "Topology optimization of natural-convection heat sinks")]
struct Cli {
    /// Worker threads for assembly (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization and write log, checkpoints and VTK snapshots.
    Optimize {
        /// Configuration file or preset name.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many iterations (resume later from the checkpoint).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Solve the state once for a stored design and report the compliance.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint holding the design.
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fluid permeability from the tuning relation.
    TuneKappa {
        /// Configuration whose tuning inputs are used; without it the cavity
        /// table is printed.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare adjoint sensitivities with central finite differences.
    CheckGradient {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn run(cli: Cli) -> darcy_topopt::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| darcy_topopt::Error::InvalidArgument(e.to_string()))?;
    }
    match cli.command {
        Command::Optimize {
            config,
            out,
            snapshot_every,
            resume,
            stop_after,
        } => {
            let spec = load_config(&config)?;
            let art = run_optimize(
                &spec,
                &out,
                &RunOptions {
                    snapshot_every,
                    resume,
                    stop_after,
                },
            )?;
            println!(
                "{} iterations, f = {:.6e}, g = {:+.3e}; artifacts in {}",
                art.result.history.len(),
                art.result.objective,
                art.result.constraint,
                art.dir.display()
            );
        }
        Command::Analyze {
            config,
            design,
            threshold,
            out,
        } => {
            let spec = load_config(&config)?;
            let report = run_analyze(&spec, &design, threshold, out.as_deref())?;
            println!(
                "f = {:.10e} (solid fraction {:.4}, {} Newton steps)",
                report.objective, report.solid_fraction, report.newton_steps
            );
        }
        Command::TuneKappa { config } => match config {
            Some(path) => {
                let spec = load_config(&path)?;
                let inputs = spec.tuning.ok_or_else(|| {
                    darcy_topopt::Error::InvalidArgument(format!("{}: no tuning inputs", path.display()))
                })?;
                println!("kappa_f = {:.6e}", tune_fluid_permeability(&inputs)?);
            }
            None => {
                println!("{:>8} {:>6} {:>12}", "alpha", "dT", "kappa_f");
                for (alpha, dt) in [(1e3, 1.7), (1e4, 1.5), (1e5, 1.2), (1e6, 0.9)] {
                    let k = tune_fluid_permeability(&TuningInputs::unit(1.0, 0.5, alpha, dt))?;
                    println!("{alpha:>8.0e} {dt:>6} {k:>12.5e}");
                }
            }
        },
        Command::CheckGradient {
            config,
            samples,
            step,
            seed,
            tolerance,
        } => {
            let spec = load_config(&config)?;
            let check = check_gradient(&spec, samples, step, seed)?;
            println!("f = {:.10e}", check.objective);
            for s in &check.samples {
                println!(
                    "{:>6} adjoint {:+.10e} fd {:+.10e} rel {:.2e}",
                    s.variable, s.adjoint, s.finite_difference, s.relative_error
                );
            }
            println!("max relative error {:.3e}", check.max_relative_error);
            return Ok(check.max_relative_error < tolerance);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
