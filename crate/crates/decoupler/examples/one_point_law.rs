//! One-point law comparison at desk scale: the pointwise SPDE value v_t(x)
//! against the forward SDE endpoint Gamma_{a,1}(1) driven by the root
//! decoupling function, in Wasserstein-2, along a decreasing rho list.
//!
//! The acceptance run uses a 512^2 grid and 10^3 effective samples; this
//! example trims both so that it finishes in about a minute.
//!
//!     cargo run --release --example one_point_law

use decoupler::decoupling::hypothesis::hypothesis_check;
use decoupler::decoupling::oracle::OracleJ;
use decoupler::nonlinearity::Nonlinearity;
use decoupler::spde::harness::{one_point_harness, OnePointConfig};

fn main() {
    let sigma = Nonlinearity::add_mult(1.0, 0.5);

    // certificate first: the harness requires an existence horizon past 1
    let grid: Vec<f64> = (0..257).map(|i| -8.0 + i as f64 / 16.0).collect();
    let cert = hypothesis_check(&sigma, &grid).unwrap();
    println!(
        "certificate: beta = {:.3}, horizon >= {:.4} (case {:?})",
        cert.beta, cert.certified_horizon, cert.class
    );
    assert!(cert.certified_horizon > 1.0);

    let j = OracleJ::AddMult {
        alpha: 1.0,
        beta: 0.5,
    }
    .as_diffusivity(1.0);

    let cfg = OnePointConfig {
        grid_n: 128,
        separation_factor: 4.0,
        max_probes_per_axis: 3,
        reference_paths: 50_000,
        reference_steps: 200,
        ..OnePointConfig::new(vec![1e-1, 3e-2, 1e-2], 1.0, 1.0, 400, 23)
    };
    let rep = one_point_harness(&sigma, &j, &cfg).unwrap();

    println!(
        "\nreference Gamma(1): mean {:.4}, var {:.4} ({} paths)",
        rep.reference_mean, rep.reference_var, rep.reference_paths
    );
    println!("\n   rho       W2       replicas  probes  n_eff   spde var");
    for r in &rep.rows {
        println!(
            "  {:>7.0e}  {:.4}   {:>5}     {}x{}    {:>5.0}   {:.4}",
            r.rho, r.w2, r.replicas, r.probes_per_axis, r.probes_per_axis, r.n_eff, r.spde_var
        );
    }
    println!("\nW2 non-increasing along decreasing rho: {}", rep.monotone_nonincreasing);
}
