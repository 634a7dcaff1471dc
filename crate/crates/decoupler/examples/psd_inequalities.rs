//! Matrix square roots and the two inequalities that make averaged square
//! roots stable: the matrix-valued reverse triangle inequality and
//! Powers-Stormer. Runs randomized suites and prints the worst slack seen.
//!
//!     cargo run --release --example psd_inequalities

use decoupler::psd::{
    check_powers_stormer, check_reverse_triangle, matrix_norms, psd_sqrt, random_psd, PsdMatrix,
};
use decoupler::sde::rng::stream_rng;
use rand::Rng;

fn main() {
    // a square root, by hand
    let a = PsdMatrix::new(nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]))
        .unwrap();
    let s = psd_sqrt(&a).unwrap();
    println!("A        = {:?}", a.matrix().as_slice());
    println!("sqrt(A)  = {:?}", s.matrix().as_slice());
    println!(
        "|S^2 - A|_F = {:.2e}",
        (s.square().matrix() - a.matrix()).norm()
    );
    let (f, op, nuc) = matrix_norms(a.matrix()).unwrap();
    println!("norms: frobenius {f:.4}, operator {op:.4}, nuclear {nuc:.4}\n");

    // randomized inequality suites
    let mut rng = stream_rng(7, 0);
    let mut worst_rt = f64::NEG_INFINITY;
    let mut worst_ps = f64::NEG_INFINITY;
    let suites = 10_000;
    for _ in 0..suites {
        let m = rng.gen_range(1..=4);
        let k = rng.gen_range(2..=6);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let pairs: Vec<_> = raw
            .iter()
            .map(|w| {
                (
                    random_psd(m, 1.0, &mut rng),
                    random_psd(m, 1.0, &mut rng),
                    w / total,
                )
            })
            .collect();
        worst_rt = worst_rt.max(check_reverse_triangle(&pairs).worst_violation);
        let pair = vec![(random_psd(m, 1.0, &mut rng), random_psd(m, 1.0, &mut rng))];
        worst_ps = worst_ps.max(check_powers_stormer(&pair).worst_violation);
    }
    println!("{suites} randomized reverse-triangle ensembles: worst lhs - rhs = {worst_rt:.3e}");
    println!("{suites} randomized Powers-Stormer pairs:       worst lhs - rhs = {worst_ps:.3e}");
    println!("(negative slack everywhere means the inequalities held)");
}
