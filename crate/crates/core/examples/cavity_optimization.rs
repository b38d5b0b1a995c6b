//! Optimizes a heat sink in the quarter cavity and writes the log, a
//! checkpoint and VTK snapshots.
//!
//! cargo run --release --example cavity_optimization -- [preset] [out dir] [stage length] [nx ny nz]

use darcy_topopt::app::{run_optimize, ProblemSpec, RunOptions, SMOKE_RESOLUTION};

fn main() -> darcy_topopt::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("cavity-a1e3", String::as_str);
    let out = args.get(1).map_or("cavity-run", String::as_str);
    let resolution = match args.get(3..6) {
        Some(r) => [r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap()],
        None => SMOKE_RESOLUTION,
    };
    let mut spec = ProblemSpec::preset(name, resolution)?;
    if let Some(len) = args.get(2) {
        spec.optimization.stage_length = len.parse().expect("stage length");
    }
    let art = run_optimize(&spec, out, &RunOptions::default())?;
    let last = art.result.history.last().expect("at least one iteration");
    println!(
        "{} iterations: f = {:.6e}, g = {:+.2e}, discreteness {:.3}",
        art.result.history.len(),
        art.result.objective,
        art.result.constraint,
        last.discreteness
    );
    println!("final design: {}", art.final_vtk.display());
    Ok(())
}
