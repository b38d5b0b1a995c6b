mod common;

use common::{preset, random_props, random_state, rel_diff, tight_newton};
use darcy_topopt::fem::{compute_velocity, thermal_compliance, ElementProps, State};
use darcy_topopt::sparse::norm2;

#[test]
fn jacobian_vector_products_match_directional_differences() {
    for name in ["cavity-a1e3", "cavity-a1e6"] {
        let problem = preset(name, [4, 4, 8]).design_problem().unwrap();
        let disc = &problem.disc;
        for seed in 0..3 {
            let (props, _) = random_props(&problem, seed);
            let mut s = random_state(disc.num_dofs(), 100 + seed);
            disc.apply_constraints(&mut s);
            let mut v = random_state(disc.num_dofs(), 200 + seed);
            for (i, vi) in v.iter_mut().enumerate() {
                if disc.is_constrained(i) {
                    *vi = 0.0;
                }
            }
            let jv = disc.assemble(&props, &s).unwrap().matrix.mul(&v);
            let h = 1e-6;
            let shift = |sign: f64| -> Vec<f64> { s.iter().zip(&v).map(|(a, b)| a + sign * h * b).collect() };
            let rp = disc.residual(&props, &shift(1.0)).unwrap();
            let rm = disc.residual(&props, &shift(-1.0)).unwrap();
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let err = rel_diff(&fd, &jv);
            assert!(err < 1e-6, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn residual_is_zero_at_zero_state_without_source() {
    let mut spec = preset("cavity-a1e6", [4, 4, 8]);
    spec.physics.heat_source = 0.0;
    let problem = spec.design_problem().unwrap();
    let (props, _) = random_props(&problem, 1);
    let r = problem
        .disc
        .residual(&props, &vec![0.0; problem.disc.num_dofs()])
        .unwrap();
    assert_eq!(norm2(&r), 0.0);
}

fn uniform_props(n: usize, kappa: f64) -> Vec<ElementProps> {
    vec![
        ElementProps {
            kappa,
            conductivity: 1.0,
            source: 0.0,
        };
        n
    ]
}

#[test]
fn velocity_examples() {
    let spec = preset("cavity-a1e3", [4, 4, 8]);
    let disc = spec.discretization().unwrap();
    let mesh = disc.mesh.clone();
    let n = mesh.num_nodes();
    let props = uniform_props(mesh.num_elements(), 2e-3);

    let rest = State::from_fields(&vec![3.0; n], &vec![0.0; n]).unwrap();
    for u in compute_velocity(&disc, &props, &rest).unwrap() {
        assert_eq!(u, [0.0; 3]);
    }

    let p: Vec<f64> = (0..n).map(|i| -mesh.node_coords(i)[0]).collect();
    let linear = State::from_fields(&p, &vec![0.0; n]).unwrap();
    for u in compute_velocity(&disc, &props, &linear).unwrap() {
        assert!(
            (u[0] - 2e-3).abs() < 1e-15 && u[1].abs() < 1e-15 && u[2].abs() < 1e-15,
            "{u:?}"
        );
    }

    let mut spec = spec;
    spec.physics.alpha = 1.0;
    let disc = spec.discretization().unwrap();
    let warm = State::from_fields(&vec![0.0; n], &vec![4.0; n]).unwrap();
    for u in compute_velocity(&disc, &props, &warm).unwrap() {
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15, "{u:?}");
        assert!((u[2] - 2e-3 * 4.0).abs() < 1e-15, "{u:?}");
    }
}

#[test]
fn compliance_examples() {
    let mut spec = preset("cavity-a1e3", [4, 4, 8]);
    spec.physics.heat_source = 0.0;
    let problem = spec.design_problem().unwrap();
    let (props, _) = random_props(&problem, 4);
    let s = State {
        s: random_state(problem.disc.num_dofs(), 5),
    };
    assert_eq!(thermal_compliance(&problem.disc, &props, &s).unwrap(), 0.0);

    // hydrostatic pressure balancing a uniform temperature gives u = 0
    let spec = preset("cavity-a1e3", [4, 4, 8]);
    let problem = spec.design_problem().unwrap();
    let (props, _) = random_props(&problem, 4);
    let disc = &problem.disc;
    let mesh = &disc.mesh;
    let c = 2.5;
    let prm = &disc.params;
    let p: Vec<f64> = (0..mesh.num_nodes())
        .map(|i| -prm.rho0 * prm.alpha * c * dot(prm.gravity, mesh.node_coords(i)))
        .collect();
    let state = State::from_fields(&p, &vec![c; mesh.num_nodes()]).unwrap();
    for u in compute_velocity(disc, &props, &state).unwrap() {
        assert!(norm(u) < 1e-9, "{u:?}");
    }
    let f = thermal_compliance(disc, &props, &state).unwrap();
    let expected = c * prm.heat_source * disc.heat_source_volume();
    assert!((f - expected).abs() < 1e-10 * expected, "{f} vs {expected}");
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[test]
fn pure_diffusion_heat_balance() {
    let spec = preset("cavity-a1e3", [8, 8, 16]);
    let mut problem = spec.design_problem().unwrap();
    problem.set_newton(tight_newton()).unwrap();
    let mut props = problem.properties(
        &problem.filtered_density(&vec![0.05; problem.num_design()]).unwrap(),
        &spec.schedule().unwrap().last(),
    );
    for p in props.iter_mut() {
        p.kappa = 1e-12;
    }
    let disc = &problem.disc;
    let mut lin = darcy_topopt::solver::LinearSolver::new(problem.newton.linear.clone());
    let (state, _) = darcy_topopt::solver::solve_state(
        disc,
        &props,
        &State::zeros(disc.mesh.num_nodes()),
        &problem.newton,
        &mut lin,
    )
    .unwrap();
    let outflow = disc.heat_outflow(&props, &state.s).unwrap();
    let generated = disc.params.heat_source * disc.heat_source_volume();
    let rel = (outflow - generated).abs() / generated;
    assert!(rel < 5e-3, "imbalance {rel:e}");
}

#[test]
fn property_gradient_vanishes_without_source() {
    let mut spec = preset("cavity-a1e6", [4, 4, 8]);
    spec.physics.heat_source = 0.0;
    let mut problem = spec.design_problem().unwrap();
    let design = common::random_design(problem.num_design(), 9);
    let cont = spec.schedule().unwrap().state(0);
    let ev = problem.evaluate(&design, &cont, None).unwrap();
    assert_eq!(ev.objective, 0.0);
    assert!(ev.objective_gradient.iter().all(|&g| g == 0.0));
}

#[test]
fn assembled_matrix_has_identity_rows_on_constraints() {
    let problem = preset("cavity-a1e3", [4, 4, 8]).design_problem().unwrap();
    let disc = &problem.disc;
    let (props, _) = random_props(&problem, 2);
    let s = random_state(disc.num_dofs(), 3);
    let sys = disc.assemble(&props, &s).unwrap();
    for i in (0..disc.num_dofs()).filter(|&i| disc.is_constrained(i)) {
        let (cols, vals) = sys.matrix.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            assert_eq!(v, if i == j { 1.0 } else { 0.0 });
        }
        assert_eq!(sys.residual[i], 0.0);
    }
}
