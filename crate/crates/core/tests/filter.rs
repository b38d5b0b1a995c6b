mod common;

use darcy_topopt::filter::{filter_backward, filter_density, FilterOperator};
use darcy_topopt::mesh::StructuredMesh;
use darcy_topopt::sparse::dot;
use proptest::prelude::*;

fn cube(n: usize) -> (StructuredMesh, FilterOperator) {
    let mesh = StructuredMesh::new(n, n, n, 1.0, 1.0, 1.0).unwrap();
    let op = FilterOperator::with_element_multiple(&mesh, 2.5).unwrap();
    (mesh, op)
}

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn self_adjoint(x in field(1728), y in field(1728)) {
        let (_, op) = cube(12);
        let lhs = dot(&op.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &op.apply(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn preserves_volume_and_bounds(x in field(1728)) {
        let (_, op) = cube(12);
        let y = op.apply(&x).unwrap();
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        prop_assert!((sx - sy).abs() <= 1e-8 * sx, "{} vs {}", sx, sy);
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(y.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn preserves_constants(c in 0.0f64..1.0) {
        let (_, op) = cube(12);
        let y = op.apply(&vec![c; 1728]).unwrap();
        prop_assert!(y.iter().all(|&v| (v - c).abs() < 1e-12));
    }
}

#[test]
fn backward_map_is_the_transposed_forward_map() {
    let spec = common::preset("cavity-a1e3", [6, 6, 12]);
    let disc = spec.discretization().unwrap();
    let tags = &disc.tags;
    let op = FilterOperator::with_element_multiple(&disc.mesh, 2.5).unwrap();
    let n = disc.mesh.num_elements();
    let design = tags.design_elements();
    let base = common::random_design(n, 1);
    let w = common::random_design(n, 2);
    let grad = filter_backward(&w, &op, tags).unwrap();
    let f0 = filter_density(&base, &op, tags).unwrap();
    let h = 1e-6;
    for &e in design.iter().step_by(7) {
        let mut xp = base.clone();
        xp[e] += h;
        let mut xm = base.clone();
        xm[e] -= h;
        let fd = (dot(&w, &filter_density(&xp, &op, tags).unwrap())
            - dot(&w, &filter_density(&xm, &op, tags).unwrap()))
            / (2.0 * h);
        assert!(
            (fd - grad[e]).abs() <= 1e-7 * grad[e].abs().max(1e-3),
            "element {e}: {fd} vs {}",
            grad[e]
        );
    }
    let passive: Vec<usize> = (0..n).filter(|e| !design.contains(e)).collect();
    assert!(passive.iter().all(|&e| grad[e] == 0.0));
    assert!(f0.iter().all(|&v| (0.0..=1.0).contains(&v)));
}
