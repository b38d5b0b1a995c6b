#![allow(dead_code)]

use darcy_topopt::app::ProblemSpec;
use darcy_topopt::fem::ElementProps;
use darcy_topopt::materials::ContinuationState;
use darcy_topopt::optimizer::DesignProblem;
use darcy_topopt::solver::{LinearConfig, NewtonConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn preset(name: &str, resolution: [usize; 3]) -> ProblemSpec {
    ProblemSpec::preset(name, resolution).expect("preset")
}

/// Newton settings tight enough that solver error does not pollute finite
/// differences.
pub fn tight_newton() -> NewtonConfig {
    NewtonConfig {
        tolerance: 1e-12,
        absolute_floor: 1e-14,
        linear: LinearConfig::direct(),
        ..NewtonConfig::default()
    }
}

pub fn random_design(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.1..0.9)).collect()
}

/// Element properties of a random design under the first continuation stage.
pub fn random_props(problem: &DesignProblem, seed: u64) -> (Vec<ElementProps>, ContinuationState) {
    let cont = ContinuationState {
        stage: 0,
        q_c: 0.881,
        q_p: 8.0,
        kappa_solid: 1e-5,
        stage_length: 1,
    };
    let design = random_design(problem.num_design(), seed);
    let physical = problem.filtered_density(&design).unwrap();
    (problem.properties(&physical, &cont), cont)
}

pub fn random_state(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                rng.gen_range(-2.0..2.0)
            } else {
                rng.gen_range(0.0..5.0)
            }
        })
        .collect()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}
