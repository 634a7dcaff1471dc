//! The exponential time-scale calculus: attenuation constants, the S/T and
//! U/R reparameterization pairs, and the heat-kernel identities.
//!
//!     cargo run --release --example scale_calculus

use decoupler::scales;

fn main() {
    println!("attenuation gamma_rho = sqrt(4 pi / log(1/rho + 1)):");
    for rho in [1.0, 1e-2, 1e-4, 1e-6, 1e-8] {
        println!("  rho = {rho:>8.0e}   gamma = {:.6}", scales::gamma_rho(rho).unwrap());
    }

    let rho = 1e-4;
    println!("\nround trips at rho = {rho}:");
    for tau in [1e-6, 1e-3, 1.0, 10.0] {
        let q = scales::s_rho(tau, rho).unwrap();
        let back = scales::t_rho(q, rho).unwrap();
        println!(
            "  tau = {tau:>8.0e}  ->  q = S_rho(tau) = {q:.6}  ->  T_rho(q) = {back:.6e}  (rel err {:.1e})",
            (back - tau).abs() / tau
        );
    }

    let (t0, t1) = (0.25, 1.5);
    let top = scales::time_change_u(t1, t0, t1, rho).unwrap();
    println!("\nmartingale clock U on [{t0}, {t1}]: U(T0) = 0, U(T1) = {top:.6} = S_rho(T1-T0)");
    for t in [0.5, 1.0, 1.45] {
        let q = scales::time_change_u(t, t0, t1, rho).unwrap();
        let back = scales::time_change_r(q, t0, t1, rho).unwrap();
        println!("  t = {t:.2}  ->  q = {q:.6}  ->  R(q) = {back:.12}");
    }

    println!("\nheat kernel: G_1(0) = {:.6} (= 1/2pi)", scales::heat_kernel(1.0, [0.0, 0.0]).unwrap());
    let tau = 2.0;
    let x = [1.0, 0.0];
    let lhs = scales::heat_kernel(tau, x).unwrap().powi(2);
    let rhs = scales::heat_kernel(tau / 2.0, x).unwrap() / (4.0 * std::f64::consts::PI * tau);
    println!("G_tau(x)^2 vs (4 pi tau)^-1 G_tau/2(x): {lhs:.12e} vs {rhs:.12e}");

    println!("\ndiagnostic scale factors at rho = 1e-4:");
    println!("  kappa(ell=4)   = {:.6}", scales::kappa(4.0, 1e-4).unwrap());
    println!("  kappa(ell=2.5) = {:.6}", scales::kappa(2.5, 1e-4).unwrap());
    println!("  nu             = {:.6}", scales::nu(1e-4).unwrap());
}
