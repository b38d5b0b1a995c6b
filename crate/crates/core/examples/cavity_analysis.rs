//! Solves the coupled state once for a uniform design on a cavity preset and
//! prints the compliance, heat balance and solver statistics.
//!
//! cargo run --release --example cavity_analysis -- [preset] [nx ny nz]

use std::time::Instant;

use darcy_topopt::app::{ProblemSpec, SMOKE_RESOLUTION};

fn main() -> darcy_topopt::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("cavity-a1e6");
    let resolution = match args.get(1..4) {
        Some(r) => [r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap()],
        None => SMOKE_RESOLUTION,
    };
    let spec = ProblemSpec::preset(name, resolution)?;
    let mut problem = spec.design_problem()?;
    let design = vec![spec.optimization.volume_fraction; problem.num_design()];
    let physical = problem.filtered_density(&design)?;
    let cont = spec.schedule()?.last();

    let start = Instant::now();
    let (state, report, f) = problem.solve_physical(&physical, &cont, None)?;
    let elapsed = start.elapsed().as_secs_f64();

    let props = problem.properties(&physical, &cont);
    let outflow = problem.disc.heat_outflow(&props, &state.s)?;
    let generated = problem.disc.params.heat_source * problem.disc.heat_source_volume();
    let speed = problem
        .disc
        .velocities(&props, &state.s)?
        .iter()
        .map(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt())
        .fold(0.0, f64::max);
    let t_max = state.temperatures().iter().cloned().fold(f64::MIN, f64::max);

    println!("{name} at {resolution:?}: {} dofs", problem.disc.num_dofs());
    println!("compliance f      = {f:.6e}");
    println!("max temperature   = {t_max:.4}");
    println!("max Darcy speed   = {speed:.4e}");
    println!("heat balance      = {:.4e} out / {:.4e} in", outflow, generated);
    println!(
        "newton            = {} steps, {} Krylov its, |R| {:.2e} -> {:.2e}, ramped {}",
        report.iterations, report.krylov_iterations, report.initial_residual, report.final_residual, report.ramped
    );
    println!("wall time         = {elapsed:.2} s");
    Ok(())
}
