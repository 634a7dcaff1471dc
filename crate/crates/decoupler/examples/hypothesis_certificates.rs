//! Existence-horizon certificates from the shape of the nonlinearity alone:
//! classify the positivity interval, fit the sandwich constants, and report
//! the certified horizon beta^{-2}.
//!
//!     cargo run --release --example hypothesis_certificates

use decoupler::decoupling::hypothesis::hypothesis_check;
use decoupler::nonlinearity::Nonlinearity;

fn main() {
    let grid: Vec<f64> = (0..513).map(|i| -8.0 + i as f64 / 32.0).collect();
    let cases = vec![
        Nonlinearity::relu(0.5),
        Nonlinearity::add_mult(1.0, 0.8),
        Nonlinearity::linear(0.9),
        Nonlinearity::constant_scalar(0.0),
        Nonlinearity::scalar_fn(
            |b| if b > 0.0 && b < 1.0 { b.min(1.0 - b) } else { 0.0 },
            1.0,
            (0.25, 1.0),
            "tent on (0,1)",
        ),
    ];
    for sigma in cases {
        match hypothesis_check(&sigma, &grid) {
            Ok(rep) => println!(
                "{:<24} {:?}: beta = {:.3}, K = {:.2}, gamma = {:.2} -> horizon >= {:.4} (certificate: {})",
                sigma.label, rep.class, rep.beta, rep.k_const, rep.gamma,
                rep.certified_horizon, rep.certificate
            ),
            Err(e) => println!("{:<24} rejected: {e}", sigma.label),
        }
    }

    // a disconnected positivity set is refused by construction
    let bumps = Nonlinearity::scalar_fn(
        |b| {
            let d = (b + 1.0).abs().min((b - 1.0).abs());
            (0.2 - d).max(0.0)
        },
        1.0,
        (0.04, 1.0),
        "two bumps",
    );
    match hypothesis_check(&bumps, &grid) {
        Err(e) => println!("{:<24} rejected: {e}", bumps.label),
        Ok(_) => unreachable!(),
    }
}
