//! The SPDE normalization acid test at desk scale: for constant sigma the
//! pointwise variance must equal c^2 S_rho(t), which pins the attenuation,
//! the discrete noise scaling, and the smoothing convention simultaneously.
//! Also demonstrates the martingale V and its quadratic variation.
//!
//!     cargo run --release --example spde_variance

use decoupler::nonlinearity::Nonlinearity;
use decoupler::scales;
use decoupler::spde::{martingale_v, probe_nodes, run_replicas, SpdeParams, SpdeSim, StepPlan};

fn main() {
    let rho = 1e-2;
    let t = 0.5;
    let c = 1.0;
    let n = 128;
    let params = SpdeParams::for_grid(n, rho);
    println!(
        "grid {n}x{n}, box {:.3}, h = {:.4}, dt = {:.1e} (h^2 = rho/4, dt = rho/4)",
        params.l_dom,
        params.h(),
        params.dt
    );
    let plan = StepPlan::new(params).unwrap();
    let sigma = Nonlinearity::constant_scalar(c);
    let probes = probe_nodes(n, 2);
    let replicas = 96;
    let vals: Vec<Vec<f64>> = run_replicas(&plan, &sigma, &[0.0], t, replicas, 3, |_r, sim| {
        Ok(probes.iter().map(|&(ix, iy)| sim.read_node(ix, iy)[0]).collect())
    })
    .unwrap();
    let flat: Vec<f64> = vals.into_iter().flatten().collect();
    let nn = flat.len() as f64;
    let mean = flat.iter().sum::<f64>() / nn;
    let var = flat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nn - 1.0);
    let expect = c * c * scales::s_rho(t, rho).unwrap();
    println!(
        "pointwise variance over {} samples: {var:.4}  (c^2 S_rho(t) = {expect:.4}, stderr {:.4})",
        flat.len(),
        expect * (2.0 / nn).sqrt()
    );

    // one replica's martingale V_t = G_{T-t} v_t(x) and its QV
    let mut sim = SpdeSim::from_constant(&plan, &[0.0], 17, 0).unwrap();
    let mut history = vec![sim.snapshot().unwrap()];
    let mut k = 0;
    while sim.t + 0.5 * plan.params.dt < t {
        sim.step(&sigma).unwrap();
        k += 1;
        if k % 10 == 0 {
            history.push(sim.snapshot().unwrap());
        }
    }
    let path = martingale_v(&history, &sigma, t, [1.0, 1.0]).unwrap();
    println!(
        "\nmartingale V at x: {} recorded times, V_0 = {:.4}, V_T = {:.4}",
        path.times.len(),
        path.values.first().unwrap(),
        path.values.last().unwrap()
    );
    println!(
        "realized total QV = {:.4}, predictable integrand total = {:.4} (expect ~ {expect:.4})",
        path.qv_realized.iter().sum::<f64>(),
        path.qv_integrand.iter().sum::<f64>()
    );
}
