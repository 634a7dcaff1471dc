//! The additive-plus-multiplicative family near criticality: the
//! time-changed forward SDE dX = sqrt(alpha^2 + X^2) dB relaxes to the
//! Cauchy(alpha) law; a Kolmogorov-Smirnov check against the exact CDF.
//!
//!     cargo run --release --example cauchy_limit

use decoupler::sde::{solve_theta, DiffusivityField, McConfig};

fn main() {
    let alpha = 1.0f64;
    let g = DiffusivityField::closed_scalar(
        move |_, b| (alpha * alpha + b * b).sqrt(),
        6.0,
        1.0,
        "sqrt(alpha^2 + x^2)",
    );
    let mut mc = McConfig::new(100_000, 8000, 99);
    mc.blowup_factor = 1e9; // Cauchy tails
    let ens = solve_theta(&g, &[0.0], 6.0, &mc).unwrap();
    let mut xs = ens.component(0);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let n = xs.len() as f64;
    let cdf = |x: f64| 0.5 + (x / alpha).atan() / std::f64::consts::PI;
    let mut ks = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        ks = ks.max((cdf(x) - i as f64 / n).abs());
        ks = ks.max(((i + 1) as f64 / n - cdf(x)).abs());
    }
    println!("samples: {}", xs.len());
    println!("KS distance to Cauchy({alpha}): {ks:.4}");
    println!("\nquantiles (empirical vs exact):");
    for p in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let emp = xs[(p * n) as usize];
        let exact = alpha * (std::f64::consts::PI * (p - 0.5)).tan();
        println!("  p = {p:.2}:  {emp:+.4}  vs  {exact:+.4}");
    }
}
