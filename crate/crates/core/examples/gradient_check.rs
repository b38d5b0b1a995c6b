//! Adjoint sensitivities against central finite differences on a small
//! cavity mesh.
//!
//! cargo run --release --example gradient_check -- [preset] [samples]

use darcy_topopt::app::{check_gradient, ProblemSpec};

fn main() -> darcy_topopt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("cavity-a1e6", String::as_str);
    let samples = args.get(1).map_or(10, |a| a.parse().expect("sample count"));
    let spec = ProblemSpec::preset(name, [4, 4, 8])?;
    let check = check_gradient(&spec, samples, 1e-6, 3)?;
    println!("{name}: f = {:.8e}", check.objective);
    println!("{:>6} {:>16} {:>16} {:>10}", "var", "adjoint", "finite diff", "rel err");
    for s in &check.samples {
        println!(
            "{:>6} {:>16.8e} {:>16.8e} {:>10.2e}",
            s.variable, s.adjoint, s.finite_difference, s.relative_error
        );
    }
    println!("max relative error {:.2e}", check.max_relative_error);
    Ok(())
}
