//! Filters a random density field with the PDE filter and reports volume
//! preservation, bounds and the spread of a single solid element.
//!
//! cargo run --release --example helmholtz_filter -- [n] [radius multiple]

use darcy_topopt::filter::FilterOperator;
use darcy_topopt::mesh::StructuredMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> darcy_topopt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(24, |a| a.parse().expect("mesh size"));
    let multiple: f64 = args.get(1).map_or(2.5, |a| a.parse().expect("radius multiple"));
    let mesh = StructuredMesh::new(n, n, n, 1.0, 1.0, 1.0)?;
    let op = FilterOperator::with_element_multiple(&mesh, multiple)?;
    println!("{n}^3 elements, filter length {:.4}", op.length_scale());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..mesh.num_elements()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y = op.apply(&x)?;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    println!("random field: volume {sx:.6} -> {sy:.6}, filtered range [{lo:.4}, {hi:.4}]");

    let mut spike = vec![0.0; mesh.num_elements()];
    let centre = mesh.element_index(n / 2, n / 2, n / 2);
    spike[centre] = 1.0;
    let s = op.apply(&spike)?;
    print!("single element spread along x:");
    for i in n / 2..(n / 2 + 5).min(n) {
        print!(" {:.4}", s[mesh.element_index(i, n / 2, n / 2)]);
    }
    println!();
    Ok(())
}
