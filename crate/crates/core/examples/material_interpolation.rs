//! Tabulates the RAMP conductivity and permeability over the density range
//! for every stage of the five-stage continuation.
//!
//! cargo run --example material_interpolation

use darcy_topopt::app::ProblemSpec;
use darcy_topopt::materials::{ContinuationSchedule, Interpolation, ScheduleKind};

fn main() -> darcy_topopt::Result<()> {
    let spec = ProblemSpec::preset("cavity-a1e6", [8, 8, 16])?;
    let schedule = ContinuationSchedule::new(ScheduleKind::FiveStage, 30)?;
    let gammas = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0];
    for stage in 0..schedule.stages.len() {
        let cont = schedule.state(stage);
        let interp = Interpolation::new(&spec.physics, &cont);
        println!(
            "stage {stage}: q_c = {}, q_p = {}, kappa_s = {:.0e}",
            cont.q_c, cont.q_p, cont.kappa_solid
        );
        println!("  {:>6} {:>12} {:>12}", "gamma", "k", "kappa");
        for g in gammas {
            println!(
                "  {g:>6} {:>12.5e} {:>12.5e}",
                interp.conductivity(g),
                interp.permeability(g)
            );
        }
    }
    Ok(())
}
