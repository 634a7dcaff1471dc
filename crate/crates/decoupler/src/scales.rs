//! The exponential time-scale calculus: reparameterizations between physical
//! SPDE time and the FBSDE clock, the attenuation constant, heat-kernel
//! evaluations, and the small diagnostic scale factors.
//!
//! Everything is evaluated with `ln_1p`/`exp_m1`-style stable forms so that
//! correlation parameters down to 1e-8 do not lose precision; the round-trip
//! pairs (`s_rho`/`t_rho`, `time_change_u`/`time_change_r`) are exact inverses
//! up to rounding.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("rho must be positive, got {0}")]
    BadRho(f64),
    #[error("tau must be positive, got {0}")]
    BadTau(f64),
    #[error("moment index ell must exceed 2, got {0}")]
    BadEll(f64),
    #[error("t={t} outside [{t0}, {t1}]")]
    OutOfWindow { t: f64, t0: f64, t1: f64 },
}

/// L(tau) = log(1 + tau).
pub fn log_scale(tau: f64) -> Result<f64, ScaleError> {
    if tau < 0.0 {
        return Err(ScaleError::NegativeTime(tau));
    }
    Ok(tau.ln_1p())
}

/// L_rho(tau) = L(tau) / L(1/rho).
pub fn l_rho(tau: f64, rho: f64) -> Result<f64, ScaleError> {
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    Ok(log_scale(tau)? / (1.0 / rho).ln_1p())
}

/// S_rho(tau) = log(tau/rho + 1) / log(1/rho + 1).
pub fn s_rho(tau: f64, rho: f64) -> Result<f64, ScaleError> {
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    if tau < 0.0 {
        return Err(ScaleError::NegativeTime(tau));
    }
    Ok((tau / rho).ln_1p() / (1.0 / rho).ln_1p())
}

/// T_rho(q) = S_rho^{-1}(q) = rho * [(1 + 1/rho)^q - 1].
pub fn t_rho(q: f64, rho: f64) -> Result<f64, ScaleError> {
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    if q < 0.0 {
        return Err(ScaleError::NegativeTime(q));
    }
    Ok(rho * (q * (1.0 / rho).ln_1p()).exp_m1())
}

/// The attenuation gamma_rho = sqrt(4 pi / L(1/rho)).
pub fn gamma_rho(rho: f64) -> Result<f64, ScaleError> {
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    Ok((4.0 * std::f64::consts::PI / (1.0 / rho).ln_1p()).sqrt())
}

/// U_{T0,T1,rho}(t) = L(1/rho)^{-1} log((T1 - T0 + rho)/(T1 - t + rho)).
///
/// Maps physical time in [T0, T1] to the exponential clock; U(T0) = 0 and
/// U(T1) = S_rho(T1 - T0).
pub fn time_change_u(t: f64, t0: f64, t1: f64, rho: f64) -> Result<f64, ScaleError> {
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    if t < t0 || t > t1 {
        return Err(ScaleError::OutOfWindow { t, t0, t1 });
    }
    let l = (1.0 / rho).ln_1p();
    // log((T1-T0+rho)/(T1-t+rho)) = ln_1p((t - T0)/(T1 - t + rho))
    Ok(((t - t0) / (t1 - t + rho)).ln_1p() / l)
}

/// R_{T0,T1,rho}(q) = U^{-1}(q) = T0 + (1 - e^{-q L(1/rho)}) (T1 + rho - T0).
pub fn time_change_r(q: f64, t0: f64, t1: f64, rho: f64) -> Result<f64, ScaleError> {
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    if q < 0.0 {
        return Err(ScaleError::NegativeTime(q));
    }
    let l = (1.0 / rho).ln_1p();
    Ok(t0 - (-q * l).exp_m1() * (t1 + rho - t0))
}

/// The standard two-dimensional heat kernel G_tau(x) = (2 pi tau)^{-1}
/// exp(-|x|^2 / (2 tau)).
pub fn heat_kernel(tau: f64, x: [f64; 2]) -> Result<f64, ScaleError> {
    if tau <= 0.0 {
        return Err(ScaleError::BadTau(tau));
    }
    let r2 = x[0] * x[0] + x[1] * x[1];
    Ok((-r2 / (2.0 * tau)).exp() / (2.0 * std::f64::consts::PI * tau))
}

/// The Fourier symbol of the heat semigroup on the torus: exp(-tau |k|^2 / 2).
///
/// This is the normative form for field operations; the pointwise kernel
/// above is for diagnostics and quadrature checks.
pub fn heat_symbol(tau: f64, k_sq: f64) -> f64 {
    (-0.5 * tau * k_sq).exp()
}

/// kappa_{ell,rho} = L(1/rho)^{-1/(1 - 2/ell)}, for ell > 2.
pub fn kappa(ell: f64, rho: f64) -> Result<f64, ScaleError> {
    if ell <= 2.0 {
        return Err(ScaleError::BadEll(ell));
    }
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    let l = (1.0 / rho).ln_1p();
    Ok(l.powf(-1.0 / (1.0 - 2.0 / ell)))
}

/// nu_rho = 2 L(L(1/rho)).
pub fn nu(rho: f64) -> Result<f64, ScaleError> {
    if rho <= 0.0 {
        return Err(ScaleError::BadRho(rho));
    }
    Ok(2.0 * (1.0 / rho).ln_1p().ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_scale_basics() {
        assert_eq!(log_scale(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            log_scale(std::f64::consts::E - 1.0).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert!(log_scale(-1.0).is_err());
        // Subadditivity under products: L(15) <= L(3) + L(5).
        let l15 = log_scale(15.0).unwrap();
        assert_relative_eq!(l15, 2.7726, epsilon = 1e-4);
        assert!(l15 <= log_scale(3.0).unwrap() + log_scale(5.0).unwrap());
    }

    #[test]
    fn s_t_fixed_points_and_round_trip() {
        for rho in [1e-1, 1e-4, 1e-8] {
            assert_eq!(s_rho(0.0, rho).unwrap(), 0.0);
            assert_eq!(t_rho(0.0, rho).unwrap(), 0.0);
            // q = 1 forces tau = 1: rho [(1 + 1/rho) - 1] = 1.
            assert_relative_eq!(t_rho(1.0, rho).unwrap(), 1.0, max_relative = 1e-13);
        }
        let rho = 1e-4;
        for tau in [1e-6, 1e-3, 1.0, 10.0] {
            let q = s_rho(tau, rho).unwrap();
            let back = t_rho(q, rho).unwrap();
            assert_relative_eq!(back, tau, max_relative = 1e-12);
        }
    }

    #[test]
    fn s_rho_monotone_concave_t_rho_convex() {
        let rho = 1e-3;
        let taus: Vec<f64> = (1..200).map(|i| i as f64 * 0.05).collect();
        let s: Vec<f64> = taus.iter().map(|&t| s_rho(t, rho).unwrap()).collect();
        for w in s.windows(3) {
            assert!(w[1] > w[0]);
            // Concavity: midpoint lies above chord on a uniform grid.
            assert!(w[1] >= (w[0] + w[2]) / 2.0 - 1e-12);
        }
        let qs: Vec<f64> = (1..100).map(|i| i as f64 * 0.01).collect();
        let t: Vec<f64> = qs.iter().map(|&q| t_rho(q, rho).unwrap()).collect();
        for w in t.windows(3) {
            assert!(w[1] > w[0]);
            assert!(w[1] <= (w[0] + w[2]) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn gamma_rho_values_and_identity() {
        // High-precision direct evaluations of sqrt(4 pi / log(1/rho + 1)).
        assert_relative_eq!(gamma_rho(1.0).unwrap(), 4.257868077724905, epsilon = 1e-12);
        assert_relative_eq!(gamma_rho(1e-4).unwrap(), 1.1680589, epsilon = 1e-6);
        // gamma_rho^2 L(1/rho) = 4 pi exactly.
        for rho in [0.7, 1e-2, 1e-5, 1e-8] {
            let g = gamma_rho(rho).unwrap();
            assert_relative_eq!(
                g * g * (1.0 / rho).ln_1p(),
                4.0 * std::f64::consts::PI,
                max_relative = 1e-14
            );
        }
        // Monotone decreasing as rho -> 0.
        let grid = [1.0, 1e-1, 1e-2, 1e-4, 1e-6, 1e-8];
        for w in grid.windows(2) {
            assert!(gamma_rho(w[1]).unwrap() < gamma_rho(w[0]).unwrap());
        }
    }

    #[test]
    fn u_r_endpoints_and_round_trip() {
        let (t0, t1, rho) = (0.25, 1.75, 1e-4);
        assert_relative_eq!(time_change_u(t0, t0, t1, rho).unwrap(), 0.0);
        let top = time_change_u(t1, t0, t1, rho).unwrap();
        assert_relative_eq!(top, s_rho(t1 - t0, rho).unwrap(), max_relative = 1e-13);
        assert_relative_eq!(time_change_r(0.0, t0, t1, rho).unwrap(), t0);
        assert_relative_eq!(
            time_change_r(top, t0, t1, rho).unwrap(),
            t1,
            max_relative = 1e-13
        );
        for i in 1..100 {
            let t = t0 + (t1 - t0) * i as f64 / 100.0;
            let q = time_change_u(t, t0, t1, rho).unwrap();
            assert_relative_eq!(
                time_change_r(q, t0, t1, rho).unwrap(),
                t,
                max_relative = 1e-12
            );
        }
        assert!(time_change_u(2.0, t0, t1, rho).is_err());
    }

    #[test]
    fn l_bd_q1_q2_identity() {
        // L_rho((T(q2) - T(q1)) / (T(q1) + rho)) = q2 - q1.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(3);
        for _ in 0..200 {
            let rho = 10f64.powf(rng.gen_range(-6.0..-1.0));
            let a: f64 = rng.gen_range(0.0..3.0);
            let b: f64 = rng.gen_range(0.0..3.0);
            let (q1, q2) = if a < b { (a, b) } else { (b, a) };
            let t1 = t_rho(q1, rho).unwrap();
            let t2 = t_rho(q2, rho).unwrap();
            let lhs = l_rho((t2 - t1) / (t1 + rho), rho).unwrap();
            assert_relative_eq!(lhs, q2 - q1, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn heat_kernel_values_and_gt2() {
        assert_relative_eq!(
            heat_kernel(1.0, [0.0, 0.0]).unwrap(),
            1.0 / (2.0 * std::f64::consts::PI),
            epsilon = 1e-15
        );
        assert!(heat_kernel(0.0, [0.0, 0.0]).is_err());
        // G_tau(x)^2 = (4 pi tau)^{-1} G_{tau/2}(x), at tau = 2, |x| = 1.
        let tau = 2.0;
        let x = [1.0, 0.0];
        let lhs = heat_kernel(tau, x).unwrap().powi(2);
        let rhs =
            heat_kernel(tau / 2.0, x).unwrap() / (4.0 * std::f64::consts::PI * tau);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
    }

    #[test]
    fn heat_kernel_normalization_by_quadrature() {
        // Midpoint rule on [-12, 12]^2 at tau = 0.5.
        let tau = 0.5;
        let n = 1200;
        let h = 24.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let x = -12.0 + (i as f64 + 0.5) * h;
            for j in 0..n {
                let y = -12.0 + (j as f64 + 0.5) * h;
                total += heat_kernel(tau, [x, y]).unwrap();
            }
        }
        total *= h * h;
        assert!((total - 1.0).abs() < 1e-8, "quadrature mass {total}");
    }

    #[test]
    fn kappa_and_nu_values() {
        // ell = 4, rho = 1e-4: kappa = L(1e4)^{-2}.
        let k = kappa(4.0, 1e-4).unwrap();
        assert_relative_eq!(k, (1.0f64 / 1e-4).ln_1p().powi(-2), epsilon = 1e-15);
        assert_relative_eq!(k, 0.011788, epsilon = 1e-5);
        assert!(kappa(2.0, 1e-4).is_err());
        // kappa <= 1 / L(1/rho) on a grid.
        for ell in [2.1, 2.5, 3.0, 4.0, 8.0] {
            for rho in [0.5, 1e-2, 1e-4, 1e-7] {
                assert!(kappa(ell, rho).unwrap() <= 1.0 / (1.0f64 / rho).ln_1p() + 1e-15);
            }
        }
        // nu(1e-4) = 2 log(1 + log(10001)), direct evaluation.
        assert_relative_eq!(nu(1e-4).unwrap(), 4.646823, epsilon = 1e-5);
    }
}
