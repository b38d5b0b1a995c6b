mod common;

use common::{preset, tight_newton};
use darcy_topopt::fem::{Discretization, ElementProps, State};
use darcy_topopt::solver::{
    newton_solve, ramping_solve, solve_state, LinearConfig, LinearSolver, NewtonConfig, NewtonReport,
};

fn uniform_problem(name: &str, resolution: [usize; 3]) -> (Discretization, Vec<ElementProps>) {
    let spec = preset(name, resolution);
    let problem = spec.design_problem().unwrap();
    let design = vec![spec.optimization.volume_fraction; problem.num_design()];
    let physical = problem.filtered_density(&design).unwrap();
    let props = problem.properties(&physical, &spec.schedule().unwrap().last());
    (problem.disc, props)
}

#[test]
fn zero_source_converges_immediately() {
    let (disc, mut props) = uniform_problem("cavity-a1e6", [4, 4, 8]);
    for p in props.iter_mut() {
        p.source = 0.0;
    }
    let cfg = NewtonConfig::default();
    let mut lin = LinearSolver::new(cfg.linear.clone());
    let zero = State::zeros(disc.mesh.num_nodes());
    let (s, report) = newton_solve(&disc, &props, &zero, &cfg, &mut lin).unwrap();
    assert_eq!(report.iterations, 0);
    assert!(s.s.iter().all(|&v| v == 0.0));

    let (_, report) = ramping_solve(&disc, &props, &cfg, &mut lin).unwrap();
    assert_eq!(report.iterations, 0);
}

#[test]
fn small_cavity_converges_from_rest() {
    let (disc, props) = uniform_problem("cavity-a1e3", [8, 8, 16]);
    let cfg = NewtonConfig::default();
    let mut lin = LinearSolver::new(cfg.linear.clone());
    let (_, report) = newton_solve(&disc, &props, &State::zeros(disc.mesh.num_nodes()), &cfg, &mut lin).unwrap();
    assert!(report.iterations <= 10, "{} steps", report.iterations);
    assert!(report.reduction() <= 1e-4);
    assert!(report.is_monotone());
}

#[test]
fn linear_problem_takes_one_full_step() {
    let mut spec = preset("cavity-a1e3", [6, 6, 12]);
    spec.physics.alpha = 0.0;
    let problem = spec.design_problem().unwrap();
    let physical = problem.filtered_density(&vec![0.3; problem.num_design()]).unwrap();
    let props = problem.properties(&physical, &spec.schedule().unwrap().last());
    let cfg = NewtonConfig {
        linear: LinearConfig {
            tolerance: 1e-10,
            ..LinearConfig::default()
        },
        ..NewtonConfig::default()
    };
    let mut lin = LinearSolver::new(cfg.linear.clone());
    let disc = &problem.disc;
    let (_, report) = newton_solve(disc, &props, &State::zeros(disc.mesh.num_nodes()), &cfg, &mut lin).unwrap();
    assert_eq!(report.iterations, 1);
    assert_eq!(report.damping, vec![1.0]);
}

#[test]
fn ramp_reaches_the_direct_solution() {
    let (disc, props) = uniform_problem("cavity-a1e4", [6, 6, 12]);
    let cfg = tight_newton();
    let mut lin = LinearSolver::new(cfg.linear.clone());
    let (direct, d) = newton_solve(&disc, &props, &State::zeros(disc.mesh.num_nodes()), &cfg, &mut lin).unwrap();
    let (ramped, r) = ramping_solve(&disc, &props, &cfg, &mut lin).unwrap();
    assert!(!d.ramped && r.ramped);
    assert!(r.is_monotone() && r.stage_starts.len() >= cfg.ramp.len());
    let scale = direct.s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = direct
        .s
        .iter()
        .zip(&ramped.s)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let bound = 10.0 * LinearConfig::default().tolerance * scale;
    assert!(diff <= bound, "{diff:e} > {bound:e}");
}

#[test]
fn warm_start_from_converged_state_needs_at_most_one_step() {
    let (disc, props) = uniform_problem("cavity-a1e6", [8, 8, 16]);
    let cfg = NewtonConfig::default();
    let mut lin = LinearSolver::new(cfg.linear.clone());
    let (s, _) = solve_state(&disc, &props, &State::zeros(disc.mesh.num_nodes()), &cfg, &mut lin).unwrap();
    let (_, report) = newton_solve(&disc, &props, &s, &cfg, &mut lin).unwrap();
    assert!(report.iterations <= 1, "{} steps", report.iterations);
}

#[test]
fn strongly_convective_cold_start_is_monotone() {
    let (disc, props) = uniform_problem("cavity-a1e6", [8, 8, 16]);
    let cfg = NewtonConfig::default();
    let mut lin = LinearSolver::new(cfg.linear.clone());
    let zero = State::zeros(disc.mesh.num_nodes());
    let (state, report) = solve_state(&disc, &props, &zero, &cfg, &mut lin).unwrap();
    assert!(report.is_monotone(), "{:?}", report.residual_history);
    assert!(report.damping.iter().all(|&t| t > 0.0 && t <= 1.0));
    let r = disc.residual(&props, &state.s).unwrap();
    assert_eq!(darcy_topopt::sparse::norm2(&r), report.final_residual);
}

#[test]
fn invalid_ramp_is_rejected() {
    let cfg = NewtonConfig {
        ramp: vec![0.1, 0.5],
        ..NewtonConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn monotonicity_is_judged_per_ramp_stage() {
    let mut report = NewtonReport {
        residual_history: vec![1.0, 0.1, 0.01, 5.0, 0.5],
        ..NewtonReport::default()
    };
    assert!(!report.is_monotone());
    report.stage_starts = vec![0, 3];
    assert!(report.is_monotone());
    report.residual_history.push(0.6);
    assert!(!report.is_monotone());
}
