//! Starts from four radial fins around a suspended heated cylinder, runs the
//! three-stage schedule and compares the result with the fins under the
//! final material parameters.
//!
//! cargo run --release --example cylinder_optimization -- [out dir] [nx ny nz]

use darcy_topopt::app::{analyze_design, initial_design, run_optimize, ProblemSpec, RunOptions, SMOKE_RESOLUTION};

fn main() -> darcy_topopt::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map_or("cylinder-run", String::as_str);
    let resolution = match args.get(1..4) {
        Some(r) => [r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap()],
        None => SMOKE_RESOLUTION,
    };
    let spec = ProblemSpec::preset("cylinder", resolution)?;
    let problem = spec.design_problem()?;
    let fins = initial_design(&spec, &problem)?;
    let reference = analyze_design(&spec, &fins, None, None)?;
    println!("four-fin reference: f = {:.6e}", reference.objective);

    let art = run_optimize(&spec, out, &RunOptions::default())?;
    let f = art.result.objective;
    println!(
        "optimized: f = {f:.6e} ({:+.1}% vs reference), g = {:+.2e}",
        100.0 * (f / reference.objective - 1.0),
        art.result.constraint
    );
    Ok(())
}
