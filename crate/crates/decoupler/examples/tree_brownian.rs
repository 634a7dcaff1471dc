//! Tree-correlated Brownian drivers: identical increments until the
//! separation time, independent afterwards, with the ultrametric matrix
//! encoding the tree.
//!
//!     cargo run --release --example tree_brownian

use decoupler::sde::tree::{tree_brownian, TreeCorrelation};

fn main() {
    // three leaves: 1 and 2 split at 0.5, leaf 3 splits from both at 0.2
    let n = 3;
    let mut p = vec![0.0; 9];
    for i in 0..n {
        p[i * n + i] = 1.0;
    }
    p[0 * n + 1] = 0.5;
    p[1 * n + 0] = 0.5;
    for (i, j) in [(0, 2), (2, 0), (1, 2), (2, 1)] {
        p[i * n + j] = 0.2;
    }
    let corr = TreeCorrelation::new(n, p, 1e-12).unwrap();

    let reps = 20_000;
    let steps = 50;
    let mut ends = vec![Vec::with_capacity(reps); 3];
    for s in 0..reps {
        let paths = tree_brownian(&corr, 1.0, steps, 1, 1000 + s as u64);
        for i in 0..3 {
            ends[i].push(paths[i][steps]);
        }
    }
    println!("empirical endpoint covariances over {reps} replicas (expect min(1, p_ij)):");
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let nn = reps as f64;
        let mi = ends[i].iter().sum::<f64>() / nn;
        let mj = ends[j].iter().sum::<f64>() / nn;
        let c = ends[i]
            .iter()
            .zip(&ends[j])
            .map(|(x, y)| (x - mi) * (y - mj))
            .sum::<f64>()
            / (nn - 1.0);
        println!(
            "  Cov(B{}(1), B{}(1)) = {c:+.4}   (p = {})",
            i + 1,
            j + 1,
            corr.get(i, j)
        );
    }

    // a non-ultrametric matrix is rejected with the violating triple
    let mut bad = vec![0.0; 9];
    for i in 0..n {
        bad[i * n + i] = 1.0;
    }
    bad[0 * n + 1] = 0.1;
    bad[1 * n + 0] = 0.1;
    for (i, j) in [(0, 2), (2, 0), (1, 2), (2, 1)] {
        bad[i * n + j] = 0.6;
    }
    match TreeCorrelation::new(n, bad, 1e-12) {
        Err(e) => println!("\nnon-ultrametric geometry rejected: {e}"),
        Ok(_) => unreachable!(),
    }
}
