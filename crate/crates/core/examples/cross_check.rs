//! Optimizes the cavity for two Rayleigh regimes and analyses each design
//! under both, printing the cross-check matrix.
//!
//! cargo run --release --example cross_check -- [stage length] [nx ny nz]

use darcy_topopt::app::{analyze_design, run_optimize, ProblemSpec, RunOptions, SMOKE_RESOLUTION};

fn main() -> darcy_topopt::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let stage_length: usize = args.first().map_or(30, |a| a.parse().expect("stage length"));
    let resolution = match args.get(1..4) {
        Some(r) => [r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap()],
        None => SMOKE_RESOLUTION,
    };
    let names = ["cavity-a1e3", "cavity-a1e6"];
    let mut specs = Vec::new();
    let mut designs = Vec::new();
    for name in names {
        let mut spec = ProblemSpec::preset(name, resolution)?;
        spec.optimization.stage_length = stage_length;
        let dir = std::env::temp_dir().join(format!("cross-check-{name}"));
        let art = run_optimize(&spec, &dir, &RunOptions::default())?;
        println!("{name}: optimized f = {:.6e}", art.result.objective);
        designs.push(art.result.design);
        specs.push(spec);
    }

    println!("\n{:>14} {:>14} {:>14}", "analysed at", "design 1e3", "design 1e6");
    for (spec, name) in specs.iter().zip(names) {
        print!("{name:>14}");
        for design in &designs {
            match analyze_design(spec, design, None, None) {
                Ok(r) => print!(" {:>14.6e}", r.objective),
                Err(_) => print!(" {:>14}", "no solution"),
            }
        }
        println!();
    }
    Ok(())
}
