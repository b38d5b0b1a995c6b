//! Fluid permeability that makes the porous (Darcy) plate flow match the
//! Nusselt number of free convection between vertical plates.
//!
//! cargo run --example tune_permeability -- [H L alpha dT]

use darcy_topopt::materials::{tune_fluid_permeability, TuningInputs};

fn main() -> darcy_topopt::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    if let [h, l, alpha, dt] = args[..] {
        let inputs = TuningInputs::unit(h, l, alpha, dt);
        let k = tune_fluid_permeability(&inputs)?;
        println!(
            "Ra_H = {:.4e}, Nu_f = {:.4}",
            inputs.rayleigh_h(),
            inputs.nusselt_fluid()
        );
        println!("kappa_f = {k:.6e} (porous Nu {:.4})", inputs.nusselt_porous(k));
        return Ok(());
    }

    println!("{:>8} {:>6} {:>6} {:>12} {:>10}", "alpha", "L", "dT", "kappa_f", "Nu");
    let cases = [
        (1e3, 0.5, 1.7),
        (1e4, 0.5, 1.5),
        (1e5, 0.5, 1.2),
        (1e6, 0.5, 0.9),
        (1e6, 0.4, 0.613),
    ];
    for (alpha, l, dt) in cases {
        let inputs = TuningInputs::unit(1.0, l, alpha, dt);
        let k = tune_fluid_permeability(&inputs)?;
        println!(
            "{alpha:>8.0e} {l:>6} {dt:>6} {k:>12.5e} {:>10.4}",
            inputs.nusselt_fluid()
        );
    }
    Ok(())
}
