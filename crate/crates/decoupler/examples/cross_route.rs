//! Two independent routes to the same object: sqrt of the PDE solution H
//! against the Monte Carlo Picard fixed point J, for a nonlinearity with a
//! known closed form to referee.
//!
//!     cargo run --release --example cross_route

use decoupler::decoupling::oracle::OracleJ;
use decoupler::decoupling::{picard_solve, PicardConfig};
use decoupler::nonlinearity::Nonlinearity;
use decoupler::pde::{compare_to_decoupling, solve_h, PdeConfig};
use decoupler::sde::rng::stream_rng;
use decoupler::sde::McConfig;
use rand::Rng;

fn main() {
    let (alpha, beta) = (1.0, 0.8);
    let sigma = Nonlinearity::add_mult(alpha, beta);

    let pde_cfg = PdeConfig::new(6.0, 1.0 / 64.0);
    let h = solve_h(move |b| beta * beta * (alpha * alpha + b * b), 1.0, &pde_cfg).unwrap();

    let cfg = PicardConfig {
        n_q: 11,
        n_b: 65,
        b_max: 8.0,
        tol: 2e-2,
        ..PicardConfig::new(1.0, McConfig::new(30_000, 150, 5))
    };
    let j = picard_solve(&sigma, &cfg).unwrap().field;

    let mut rng = stream_rng(5, 1);
    let probes: Vec<(f64, f64)> = (0..50)
        .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(-4.0..4.0)))
        .collect();
    let rep = compare_to_decoupling(&h, &j, &probes).unwrap();
    println!(
        "sup |sqrt(H) - J| / <b> over 50 probes: {:.3e} (worst at q={:.2}, b={:.2})",
        rep.sup_weighted, rep.worst_probe.0, rep.worst_probe.1
    );
    println!("error budget: MC stderr {:.1e}, grid {:.1e}", rep.mc_stderr, rep.grid_budget);

    // referee: both routes against the closed form at a few points
    let oracle = OracleJ::AddMult { alpha, beta };
    println!("\n   q     b     sqrt(H)      J_picard     closed form");
    for (q, b) in [(0.25, 0.0), (0.5, 1.0), (1.0, -2.0), (0.75, 3.0)] {
        println!(
            "  {q:.2}  {b:+.1}   {:.6}   {:.6}   {:.6}",
            h.eval(q, b).sqrt(),
            j.eval(q, b),
            oracle.eval_scalar(q, b).unwrap()
        );
    }
}
