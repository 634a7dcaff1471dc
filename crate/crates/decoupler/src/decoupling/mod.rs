//! The root decoupling function: the Monte Carlo operator whose fixed point
//! it is, Picard iteration on a grid, horizon extension, exact rescaling,
//! and the zero-set diagnostic.
//!
//! The iteration starts from J0(q, .) = sigma(.), which matches the q = 0
//! boundary exactly and sits inside the invariant class of the contraction
//! argument. Common random numbers are reused across iterates (streams keyed
//! by grid node and path, not by iteration) so the stopping rule sees the
//! contraction instead of Monte Carlo flicker.

pub mod hypothesis;
pub mod oracle;

use crate::nonlinearity::Nonlinearity;
use crate::psd::{psd_sqrt, PsdMatrix};
use crate::sde::rng::stream_rng3;
use crate::sde::{solve_theta, DiffusivityField, GridField1, McConfig, SdeError};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecouplingError {
    #[error("horizon {q0} is not certified: requires q0 < lambda^-2 = {limit}")]
    HorizonNotCertified { q0: f64, limit: f64 },
    #[error("Picard iteration did not converge within {iters} iterations; residuals {residuals:?}")]
    NoConvergence { iters: usize, residuals: Vec<f64> },
    #[error("extension step {requested} exceeds the certified maximum {allowed}")]
    ExtensionTooLong { requested: f64, allowed: f64 },
    #[error("grid mode requires m = 1 (got m = {0})")]
    NotScalar(usize),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Picard,
    Pde,
    Oracle,
}

/// Numerical representation of J(q, b) on [0, Q0] x [-B, B] (m = 1 grid
/// mode), the central output of the crate.
#[derive(Debug, Clone)]
pub struct DecouplingField {
    pub grid: GridField1,
    pub provenance: Provenance,
    /// Max adjacent finite-difference slope per q-row.
    pub lipschitz_per_q: Vec<f64>,
    /// Horizon certificate Q0 + Lip(J(Q0, .))^{-2}.
    pub certified_horizon: f64,
    pub sigma_label: String,
    /// Weighted sup-norm change per Picard iteration (empty for oracle/pde).
    pub residual_trajectory: Vec<f64>,
    /// Worst-node Monte Carlo standard error in the weighted norm.
    pub stderr_x: f64,
}

impl DecouplingField {
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn eval(&self, q: f64, b: f64) -> f64 {
        self.grid.eval(q, b)
    }

    /// View as a diffusivity for the forward SDE.
    pub fn as_diffusivity(&self) -> DiffusivityField {
        let lip = self
            .lipschitz_per_q
            .iter()
            .fold(0.0f64, |a, &x| a.max(x));
        DiffusivityField::from_grid(self.grid.clone(), lip, format!("J[{}]", self.sigma_label))
    }

    /// Exact reparameterization J_{zeta sigma}(q, b) = zeta J_sigma(zeta^2 q, b).
    pub fn rescale(&self, zeta: f64) -> DecouplingField {
        assert!(zeta > 0.0);
        let z2 = zeta * zeta;
        let grid = GridField1::new(
            self.grid.q_grid.iter().map(|q| q / z2).collect(),
            self.grid.b_min,
            self.grid.b_step,
            self.grid.n_b,
            self.grid.values.iter().map(|v| zeta * v).collect(),
        );
        DecouplingField {
            grid,
            provenance: self.provenance,
            lipschitz_per_q: self.lipschitz_per_q.iter().map(|l| l * zeta).collect(),
            certified_horizon: self.certified_horizon / z2,
            sigma_label: format!("{} * {zeta}", self.sigma_label),
            residual_trajectory: self.residual_trajectory.clone(),
            stderr_x: self.stderr_x * zeta,
        }
    }

    /// Weighted sup-norm distance to another field on this grid's nodes
    /// (restricted to the common horizon).
    pub fn x_norm_distance(&self, other: &impl Fn(f64, f64) -> f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &q) in self.grid.q_grid.iter().enumerate() {
            for (j, b) in self.grid.b_nodes().enumerate() {
                let d = (self.grid.values[i * self.grid.n_b + j] - other(q, b)).abs();
                worst = worst.max(d / (1.0 + b * b).sqrt());
            }
        }
        worst
    }
}

/// Monte Carlo application of the fixed-point operator: returns
/// [mean sigma^2(Theta_a_Q(Q))]^{1/2} with a delta-method standard error.
pub fn q_operator(
    sigma: &Nonlinearity,
    g: &DiffusivityField,
    q_horizon: f64,
    a: &[f64],
    mc: &McConfig,
) -> Result<(PsdMatrix, f64), DecouplingError> {
    let m = sigma.dim();
    if q_horizon == 0.0 {
        return Ok((sigma.eval(a), 0.0));
    }
    let ens = solve_theta(g, a, q_horizon, mc)?;
    let mut mean = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut sumsq = 0.0; // of |sigma^2|_F
    for p in 0..ens.n_paths {
        let s2 = sigma.eval(ens.endpoint(p)).square();
        sumsq += s2.matrix().norm_squared();
        mean += s2.matrix();
    }
    mean /= ens.n_paths as f64;
    let e_frob = mean.norm();
    let var = (sumsq / ens.n_paths as f64 - e_frob * e_frob).max(0.0);
    let se_e = (var / ens.n_paths as f64).sqrt();
    let root = psd_sqrt(&PsdMatrix::new(mean).expect("mean of psd is psd"))
        .expect("sqrt of psd mean");
    let denom = 2.0 * root.operator_norm().max(1e-12);
    Ok((root, se_e / denom))
}

/// Grid configuration for m = 1 Picard solves.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PicardConfig {
    pub q0: f64,
    /// Number of q-slices including q = 0.
    pub n_q: usize,
    /// Symmetric b-domain [-b_max, b_max].
    pub b_max: f64,
    /// Number of b-nodes (odd keeps 0 on the grid).
    pub n_b: usize,
    /// Stopping tolerance on the weighted sup-norm change.
    pub tol: f64,
    pub max_iters: usize,
    pub mc: McConfig,
}

impl PicardConfig {
    pub fn new(q0: f64, mc: McConfig) -> Self {
        PicardConfig {
            q0,
            n_q: 11,
            b_max: 8.0,
            n_b: 65,
            tol: 2e-2,
            max_iters: 24,
            mc,
        }
    }
}

struct NodeStat {
    j: f64,
    se: f64,
}

/// Per-step diffusivity rows for one slice: the q-interpolation of the
/// current field is blended once per step, so the path loop only does a
/// single 1D interpolation per step.
struct BlendedSlice {
    /// rows[k * n_b + j] = J(q_slice - k dq, b_j)
    rows: Vec<f64>,
    steps: usize,
    dq: f64,
}

fn blend_slice(current: &GridField1, q_slice: f64, steps: usize) -> BlendedSlice {
    let n_b = current.n_b;
    let dq = q_slice / steps as f64;
    let mut rows = Vec::with_capacity(steps * n_b);
    for k in 0..steps {
        let q = q_slice - k as f64 * dq;
        for jb in 0..n_b {
            let b = current.b_min + current.b_step * jb as f64;
            rows.push(current.eval(q, b));
        }
    }
    BlendedSlice { rows, steps, dq }
}

#[inline]
fn row_eval(row: &[f64], b_min: f64, inv_step: f64, b: f64) -> f64 {
    let n = row.len();
    let t = (b - b_min) * inv_step;
    let v = if t <= 0.0 {
        row[0] + t * (row[1] - row[0])
    } else if t >= (n - 1) as f64 {
        let t = t - (n - 2) as f64;
        row[n - 2] + t * (row[n - 1] - row[n - 2])
    } else {
        let i = t as usize;
        let frac = t - i as f64;
        row[i] + frac * (row[i + 1] - row[i])
    };
    v.max(0.0)
}

/// One Picard sweep: apply the operator to every (q_i, b_j) node.
fn picard_sweep(
    sigma: &Nonlinearity,
    current: &GridField1,
    cfg: &PicardConfig,
    blowup_guard: f64,
) -> Result<Vec<NodeStat>, DecouplingError> {
    let n_q = current.q_grid.len();
    let n_b = current.n_b;
    let steps_full = cfg.mc.steps.max(n_q - 1);
    let inv_step = 1.0 / current.b_step;
    let blended: Vec<BlendedSlice> = current
        .q_grid
        .iter()
        .map(|&q_slice| {
            let steps = ((steps_full as f64) * q_slice / cfg.q0).ceil().max(1.0) as usize;
            blend_slice(current, q_slice, steps)
        })
        .collect();
    let results: Vec<Result<NodeStat, DecouplingError>> = (0..n_q * n_b)
        .into_par_iter()
        .map(|node| {
            let i = node / n_b;
            let j = node % n_b;
            let b = current.b_min + current.b_step * j as f64;
            if i == 0 {
                return Ok(NodeStat {
                    j: sigma.eval_scalar(b),
                    se: 0.0,
                });
            }
            let slice = &blended[i];
            let sqrt_dq = slice.dq.sqrt();
            let guard = blowup_guard * (1.0 + b.abs());
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for p in 0..cfg.mc.n_paths {
                // streams keyed by path only: every grid node sees the same
                // Brownian drivers, so differences across b and q (the
                // Lipschitz and time-regularity estimates, and the stopping
                // rule) are not polluted by independent Monte Carlo flicker
                let mut rng = stream_rng3(cfg.mc.seed, 0, p as u64, 0xA11CE);
                let mut x = b;
                for k in 0..slice.steps {
                    let row = &slice.rows[k * n_b..(k + 1) * n_b];
                    let gv = row_eval(row, current.b_min, inv_step, x);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x += gv * z * sqrt_dq;
                    if x.abs() > guard {
                        return Err(DecouplingError::Sde(SdeError::Blowup {
                            path: p,
                            step: k,
                            value: x.abs(),
                            guard,
                        }));
                    }
                }
                let s = sigma.eval_scalar(x);
                let s2 = s * s;
                sum += s2;
                sumsq += s2 * s2;
            }
            let n = cfg.mc.n_paths as f64;
            let e = sum / n;
            let var = (sumsq / n - e * e).max(0.0);
            let se_e = (var / n).sqrt();
            let jv = e.max(0.0).sqrt();
            let se = if jv > 1e-9 { se_e / (2.0 * jv) } else { se_e.sqrt() };
            Ok(NodeStat { j: jv, se })
        })
        .collect();
    results.into_iter().collect()
}

/// Outcome of a Picard solve, carrying the residual trajectory.
pub struct PicardOutcome {
    pub field: DecouplingField,
    pub iterations: usize,
}

/// Picard fixed-point iteration for J_sigma on [0, q0] x [-B, B], m = 1.
///
/// Requires q0 < Lip(sigma)^{-2} (the locally certified horizon); longer
/// horizons go through [`extend`].
pub fn picard_solve(
    sigma: &Nonlinearity,
    cfg: &PicardConfig,
) -> Result<PicardOutcome, DecouplingError> {
    if sigma.dim() != 1 {
        return Err(DecouplingError::NotScalar(sigma.dim()));
    }
    let lambda = sigma.lipschitz;
    let limit = if lambda > 0.0 {
        1.0 / (lambda * lambda)
    } else {
        f64::INFINITY
    };
    if !(cfg.q0 < limit) {
        return Err(DecouplingError::HorizonNotCertified {
            q0: cfg.q0,
            limit,
        });
    }
    assert!(cfg.n_q >= 2 && cfg.n_b >= 3);

    let q_grid: Vec<f64> = (0..cfg.n_q)
        .map(|i| cfg.q0 * i as f64 / (cfg.n_q - 1) as f64)
        .collect();
    let b_min = -cfg.b_max;
    let b_step = 2.0 * cfg.b_max / (cfg.n_b - 1) as f64;
    // J0(q, .) = sigma(.) for all q
    let sigma_row: Vec<f64> = (0..cfg.n_b)
        .map(|j| sigma.eval_scalar(b_min + b_step * j as f64))
        .collect();
    let mut values = Vec::with_capacity(cfg.n_q * cfg.n_b);
    for _ in 0..cfg.n_q {
        values.extend_from_slice(&sigma_row);
    }
    let mut grid = GridField1::new(q_grid.clone(), b_min, b_step, cfg.n_b, values);

    let mut residuals = Vec::new();
    let mut stderr_x: f64;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let stats = picard_sweep(sigma, &grid, cfg, cfg.mc.blowup_factor)?;
        let mut delta = 0.0f64;
        stderr_x = 0.0;
        let mut new_values = Vec::with_capacity(stats.len());
        for (node, stat) in stats.iter().enumerate() {
            let j = node % cfg.n_b;
            let b = b_min + b_step * j as f64;
            let w = (1.0 + b * b).sqrt();
            delta = delta.max((stat.j - grid.values[node]).abs() / w);
            stderr_x = stderr_x.max(stat.se / w);
            new_values.push(stat.j);
        }
        grid = GridField1::new(q_grid.clone(), b_min, b_step, cfg.n_b, new_values);
        residuals.push(delta);
        if delta < cfg.tol {
            let lip = grid.lipschitz_per_q();
            let lip_top = lip.last().copied().unwrap_or(lambda).max(1e-12);
            let field = DecouplingField {
                certified_horizon: cfg.q0 + 1.0 / (lip_top * lip_top),
                grid,
                provenance: Provenance::Picard,
                lipschitz_per_q: lip,
                sigma_label: sigma.label.clone(),
                residual_trajectory: residuals,
                stderr_x,
            };
            return Ok(PicardOutcome { field, iterations });
        }
    }
    Err(DecouplingError::NoConvergence {
        iters: iterations,
        residuals,
    })
}

/// Extend a solved field by `delta_q` by re-solving with sigma replaced by
/// the top slice J(Q0, .) and concatenating (the semigroup identity).
///
/// The step must respect the certificate: delta_q < Lip(J(Q0, .))^{-2}.
pub fn extend(
    field: &DecouplingField,
    delta_q: f64,
    mc: &McConfig,
    tol: f64,
) -> Result<PicardOutcome, DecouplingError> {
    if delta_q == 0.0 {
        return Ok(PicardOutcome {
            field: field.clone(),
            iterations: 0,
        });
    }
    let lip_top = field
        .lipschitz_per_q
        .last()
        .copied()
        .unwrap_or(f64::INFINITY);
    let allowed = 1.0 / (lip_top * lip_top);
    if !(delta_q < allowed) {
        return Err(DecouplingError::ExtensionTooLong {
            requested: delta_q,
            allowed,
        });
    }
    let q0 = field.horizon();
    let top: Vec<f64> = field.grid.row(field.grid.q_grid.len() - 1).to_vec();
    let b_nodes: Vec<f64> = field.grid.b_nodes().collect();
    let sigma_top = Nonlinearity::tabulated(
        b_nodes,
        top,
        format!("{}@Q={q0}", field.sigma_label),
    );
    // keep the original q-resolution
    let dq_orig = field.grid.q_grid[1] - field.grid.q_grid[0];
    let n_q2 = ((delta_q / dq_orig).round() as usize).max(1) + 1;
    let sub_cfg = PicardConfig {
        q0: delta_q,
        n_q: n_q2,
        b_max: field.grid.b_max(),
        n_b: field.grid.n_b,
        tol,
        max_iters: 24,
        mc: mc.clone(),
    };
    let sub = picard_solve(&sigma_top, &sub_cfg)?;

    let mut q_grid = field.grid.q_grid.clone();
    let mut values = field.grid.values.clone();
    let mut lip = field.lipschitz_per_q.clone();
    for (i, &q) in sub.field.grid.q_grid.iter().enumerate().skip(1) {
        q_grid.push(q0 + q);
        values.extend_from_slice(sub.field.grid.row(i));
        lip.push(sub.field.lipschitz_per_q[i]);
    }
    let grid = GridField1::new(
        q_grid,
        field.grid.b_min,
        field.grid.b_step,
        field.grid.n_b,
        values,
    );
    let lip_new = lip.last().copied().unwrap().max(1e-12);
    let mut residuals = field.residual_trajectory.clone();
    residuals.extend_from_slice(&sub.field.residual_trajectory);
    Ok(PicardOutcome {
        field: DecouplingField {
            certified_horizon: q0 + delta_q + 1.0 / (lip_new * lip_new),
            grid,
            provenance: Provenance::Picard,
            lipschitz_per_q: lip,
            sigma_label: field.sigma_label.clone(),
            residual_trajectory: residuals,
            stderr_x: field.stderr_x.max(sub.field.stderr_x),
        },
        iterations: sub.iterations,
    })
}

/// Pointwise evaluation of J for m > 1 through the fixed-point operator,
/// memoized on a lattice: full grids beyond one dimension are out of reach,
/// so repeated probes snap to lattice nodes and reuse their Monte Carlo
/// estimates.
pub struct PointwiseDecoupling {
    sigma: Nonlinearity,
    g: DiffusivityField,
    mc: McConfig,
    dq: f64,
    db: f64,
    cache: std::sync::Mutex<std::collections::HashMap<(i64, Vec<i64>), (PsdMatrix, f64)>>,
}

impl PointwiseDecoupling {
    pub fn new(sigma: Nonlinearity, g: DiffusivityField, mc: McConfig, dq: f64, db: f64) -> Self {
        assert!(sigma.dim() == g.m);
        PointwiseDecoupling {
            sigma,
            g,
            mc,
            dq,
            db,
            cache: std::sync::Mutex::new(std::collections::HashMap::new()),
        }
    }

    /// Snap (q, a) to the lattice and evaluate (cached).
    pub fn eval(&self, q: f64, a: &[f64]) -> Result<(PsdMatrix, f64), DecouplingError> {
        let qi = (q / self.dq).round() as i64;
        let ai: Vec<i64> = a.iter().map(|x| (x / self.db).round() as i64).collect();
        if let Some(hit) = self.cache.lock().unwrap().get(&(qi, ai.clone())) {
            return Ok(hit.clone());
        }
        let q_snap = qi as f64 * self.dq;
        let a_snap: Vec<f64> = ai.iter().map(|&i| i as f64 * self.db).collect();
        let out = q_operator(&self.sigma, &self.g, q_snap, &a_snap, &self.mc)?;
        self.cache
            .lock()
            .unwrap()
            .insert((qi, ai), out.clone());
        Ok(out)
    }

    pub fn cached_nodes(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

/// Zero-set diagnostic: zeros of sigma must persist as zeros of J at every
/// clock time, and J must not vanish anywhere sigma does not.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ZeroSetReport {
    pub sigma_zeros: Vec<f64>,
    /// (b, worst |J(q, b)| over q) for sigma-zero nodes.
    pub propagated: Vec<(f64, f64)>,
    /// (q, b, J) where J ~ 0 but sigma(b) > tol.
    pub spurious: Vec<(f64, f64, f64)>,
    pub pass: bool,
}

pub fn zero_set_check(
    field: &DecouplingField,
    sigma: &Nonlinearity,
    tol: f64,
    tol_propagated: f64,
) -> ZeroSetReport {
    let mut sigma_zeros = Vec::new();
    let mut propagated = Vec::new();
    let mut spurious = Vec::new();
    let n_b = field.grid.n_b;
    for (j, b) in field.grid.b_nodes().enumerate() {
        let s = sigma.eval_scalar(b);
        let worst = field
            .grid
            .q_grid
            .iter()
            .enumerate()
            .map(|(i, _)| field.grid.values[i * n_b + j].abs())
            .fold(0.0f64, f64::max);
        if s <= tol {
            sigma_zeros.push(b);
            propagated.push((b, worst));
        } else {
            for (i, &q) in field.grid.q_grid.iter().enumerate() {
                let v = field.grid.values[i * n_b + j];
                if v <= tol && s > 10.0 * tol {
                    spurious.push((q, b, v));
                }
            }
        }
    }
    let pass = propagated.iter().all(|&(_, w)| w <= tol_propagated) && spurious.is_empty();
    ZeroSetReport {
        sigma_zeros,
        propagated,
        spurious,
        pass,
    }
}

/// Self-consistency probe: |J(Q, a) - Q_sigma[J](Q, a)| at random nodes,
/// reported together with the Monte Carlo + interpolation budget.
pub fn self_consistency(
    field: &DecouplingField,
    sigma: &Nonlinearity,
    probes: &[(f64, f64)],
    mc: &McConfig,
) -> Result<f64, DecouplingError> {
    let g = field.as_diffusivity();
    let mut worst: f64 = 0.0;
    for &(q, a) in probes {
        let (op, _se) = q_operator(sigma, &g, q, &[a], mc)?;
        let d = (field.eval(q, a) - op.as_scalar()).abs() / (1.0 + a * a).sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::oracle::OracleJ;
    use super::*;
    use approx::assert_relative_eq;

    fn small_mc(seed: u64) -> McConfig {
        McConfig::new(20_000, 100, seed)
    }

    #[test]
    fn q_operator_constant_sigma_returns_it() {
        let sigma = Nonlinearity::constant_scalar(0.7);
        let g = DiffusivityField::constant_scalar(1.0, 2.0);
        let (j, se) = q_operator(&sigma, &g, 1.5, &[0.3], &small_mc(1)).unwrap();
        assert_relative_eq!(j.as_scalar(), 0.7, epsilon = 1e-12);
        assert!(se < 1e-8);
    }

    #[test]
    fn q_operator_at_zero_clock_is_sigma() {
        let sigma = Nonlinearity::add_mult(1.0, 0.5);
        let g = DiffusivityField::constant_scalar(1.0, 1.0);
        let (j, se) = q_operator(&sigma, &g, 0.0, &[2.0], &small_mc(2)).unwrap();
        assert_relative_eq!(j.as_scalar(), 0.5 * 5.0f64.sqrt(), epsilon = 1e-12);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn q_operator_linear_case_matches_moment_ode() {
        // sigma(b) = 0.5 b, g = linear-case J, Q = 1, a = 2:
        // beta sqrt(E Theta(1)^2) = 0.5 sqrt(16/3).
        let sigma = Nonlinearity::linear(0.5);
        let g = OracleJ::Linear { beta: 0.5 }.as_diffusivity(1.0);
        let mc = McConfig::new(100_000, 200, 3);
        let (j, se) = q_operator(&sigma, &g, 1.0, &[2.0], &mc).unwrap();
        let expect = 0.5 * (16.0f64 / 3.0).sqrt();
        assert!(
            (j.as_scalar() - expect).abs() < 3.0 * se.max(1e-3),
            "got {} expect {expect} (se {se})",
            j.as_scalar()
        );
    }

    #[test]
    fn picard_constant_sigma_converges_immediately() {
        let sigma = Nonlinearity::constant_scalar(1.0);
        let cfg = PicardConfig {
            n_q: 5,
            n_b: 17,
            b_max: 4.0,
            tol: 1e-6,
            ..PicardConfig::new(1.0, McConfig::new(2000, 50, 4))
        };
        let out = picard_solve(&sigma, &cfg).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out
            .field
            .grid
            .values
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn picard_rejects_uncertified_horizon() {
        let sigma = Nonlinearity::linear(0.9); // lambda^-2 ~ 1.2346
        let cfg = PicardConfig::new(1.3, McConfig::new(100, 10, 5));
        assert!(matches!(
            picard_solve(&sigma, &cfg),
            Err(DecouplingError::HorizonNotCertified { .. })
        ));
    }

    #[test]
    fn rescale_is_exact_and_invertible() {
        let oracle = OracleJ::Linear { beta: 0.4 };
        let field = crate::decoupling::field_from_oracle(&oracle, 6.0, 13, 4.0, 33);
        let scaled = field.rescale(2.0);
        // matches the beta = 0.8 oracle on shared nodes
        let target = OracleJ::Linear { beta: 0.8 };
        for (i, &q) in scaled.grid.q_grid.iter().enumerate() {
            for (j, b) in scaled.grid.b_nodes().enumerate() {
                let expect = target.eval_scalar(q, b).unwrap();
                let got = scaled.grid.values[i * scaled.grid.n_b + j];
                assert!((got - expect).abs() <= 1e-10 * (1.0 + expect));
            }
        }
        // round trip is bitwise for a power-of-two factor
        let back = scaled.rescale(0.5);
        assert_eq!(back.grid.values, field.grid.values);
        assert_eq!(back.grid.q_grid, field.grid.q_grid);
        // identity rescale
        let same = field.rescale(1.0);
        assert_eq!(same.grid.values, field.grid.values);
    }

    #[test]
    fn pointwise_two_dim_fixed_point_agrees_with_matrix_oracle() {
        // m = 2 quadratic family: sigma^2 = 0.25 b (x) b + diag(1, 0.5).
        // Feeding the closed-form J as the diffusivity, the operator must
        // return J back (the fixed-point property), pointwise.
        use crate::nonlinearity::QuadraticFamily;
        use nalgebra::DMatrix;
        use std::sync::Arc;
        let fam = QuadraticFamily {
            m: 2,
            g2: Arc::new(|x: &DMatrix<f64>| x * 0.25),
            g1: Arc::new(|_: &[f64]| DMatrix::zeros(2, 2)),
            g0: crate::psd::PsdMatrix::from_diagonal(&[1.0, 0.5]).unwrap(),
        };
        let oracle = crate::decoupling::oracle::OracleJ::Quadratic(fam.clone());
        let sigma = Nonlinearity::quadratic_family(fam);
        let horizon = 1.0;
        let o2 = oracle.clone();
        let g = DiffusivityField::closed_matrix(
            2,
            move |q, b| o2.eval(q.min(horizon), b).unwrap(),
            horizon,
            2.0,
            "J oracle m=2",
        );
        let pw = PointwiseDecoupling::new(
            sigma,
            g,
            McConfig::new(20_000, 100, 61),
            0.05,
            0.25,
        );
        for (q, a) in [(0.5, [1.0, -0.5]), (1.0, [0.0, 0.0]), (0.75, [2.0, 1.0])] {
            let (j, se) = pw.eval(q, &a).unwrap();
            let expect = oracle.eval(q, &a).unwrap();
            let gap = (j.matrix() - expect.matrix()).norm();
            assert!(
                gap <= 3.0 * se.max(5e-3) + 0.02,
                "q={q}, a={a:?}: gap {gap} (se {se})"
            );
        }
        // repeated probes hit the cache
        let before = pw.cached_nodes();
        pw.eval(0.5, &[1.0, -0.5]).unwrap();
        assert_eq!(pw.cached_nodes(), before);
    }

    #[test]
    fn converged_field_is_self_consistent() {
        // |J(Q, a) - Q_sigma[J](Q, a)| within the MC + interpolation budget
        // on random probes.
        let sigma = Nonlinearity::linear(0.5);
        let cfg = PicardConfig {
            n_q: 11,
            n_b: 65,
            b_max: 8.0,
            tol: 1e-2,
            ..PicardConfig::new(1.0, McConfig::new(40_000, 150, 21))
        };
        let out = picard_solve(&sigma, &cfg).unwrap();
        use rand::Rng;
        let mut rng = crate::sde::rng::stream_rng(77, 0);
        let probes: Vec<(f64, f64)> = (0..12)
            .map(|_| (rng.gen_range(0.1..1.0), rng.gen_range(-4.0..4.0)))
            .collect();
        let worst = self_consistency(&out.field, &sigma, &probes, &McConfig::new(40_000, 150, 99))
            .unwrap();
        let interp = 0.01; // grid bias at h_b = 0.25, dq = 0.1 for this family
        let budget = 3.0 * (out.field.stderr_x + 2e-3 + interp);
        assert!(worst <= budget, "self-consistency {worst} vs {budget}");
    }

    #[test]
    fn growth_class_propagates() {
        // |J(Q, b)|^2 <= (1 - beta^2 Q)^{-2} M + b^2/(beta^{-2} - Q) with 5%
        // slack, for sigma in Sigma(M, beta).
        let (alpha, beta) = (1.0f64, 0.5f64);
        let m_const = alpha * alpha * beta * beta;
        let sigma = Nonlinearity::add_mult(alpha, beta);
        let cfg = PicardConfig {
            n_q: 9,
            n_b: 65,
            b_max: 8.0,
            ..PicardConfig::new(1.0, McConfig::new(25_000, 120, 31))
        };
        let field = picard_solve(&sigma, &cfg).unwrap().field;
        for (i, &q) in field.grid.q_grid.iter().enumerate() {
            for (j, b) in field.grid.b_nodes().enumerate() {
                let v = field.grid.values[i * field.grid.n_b + j];
                let bound = m_const / (1.0 - beta * beta * q).powi(2)
                    + b * b / (1.0 / (beta * beta) - q);
                assert!(
                    v * v <= bound * 1.05,
                    "growth violated at q={q}, b={b}: {v}^2 vs {bound}"
                );
            }
        }
    }

    #[test]
    fn time_regularity_constant_is_stable_under_refinement() {
        // |J(Q2, a) - J(Q1, a)|/<a> <= C sqrt(|Q2 - Q1|) with C_emp finite
        // and stable when the q-grid is refined.
        let sigma = Nonlinearity::add_mult(1.0, 0.6);
        let c_emp = |n_q: usize| -> f64 {
            let cfg = PicardConfig {
                n_q,
                n_b: 49,
                b_max: 6.0,
                ..PicardConfig::new(1.0, McConfig::new(25_000, 120, 41))
            };
            let field = picard_solve(&sigma, &cfg).unwrap().field;
            let mut worst: f64 = 0.0;
            let g = &field.grid;
            for i in 1..g.q_grid.len() {
                let dq = g.q_grid[i] - g.q_grid[i - 1];
                for (j, b) in g.b_nodes().enumerate() {
                    let dj = (g.values[i * g.n_b + j] - g.values[(i - 1) * g.n_b + j]).abs();
                    worst = worst.max(dj / (1.0 + b * b).sqrt() / dq.sqrt());
                }
            }
            worst
        };
        let coarse = c_emp(6);
        let fine = c_emp(11);
        assert!(coarse.is_finite() && fine.is_finite());
        // refining the grid must not blow the constant up
        assert!(
            fine <= 2.0 * coarse + 0.1,
            "C_emp unstable: coarse {coarse}, fine {fine}"
        );
    }

    #[test]
    fn picard_contraction_factor() {
        // with common random numbers the sweep is a deterministic map, so
        // consecutive sup-norm changes contract; theory gives 2^{-1/2} in a
        // weighted norm, 0.8 absorbs the change of norms
        let sigma = Nonlinearity::add_mult(1.0, 0.7);
        let cfg = PicardConfig {
            n_q: 9,
            n_b: 49,
            b_max: 6.0,
            tol: 1e-4,
            max_iters: 16,
            ..PicardConfig::new(1.0, McConfig::new(15_000, 100, 51))
        };
        let out = picard_solve(&sigma, &cfg).unwrap();
        let res = &out.field.residual_trajectory;
        assert!(res.len() >= 3, "trajectory too short: {res:?}");
        for w in res.windows(2).skip(1) {
            if w[0] < 1e-6 {
                break; // at the deterministic fixed point
            }
            assert!(
                w[1] <= 0.8 * w[0] * (1.0 + 1e-9),
                "contraction slower than 0.8: {res:?}"
            );
        }
    }

    #[test]
    fn zero_set_preserved_for_relu_sigma() {
        let sigma = Nonlinearity::relu(0.5);
        let cfg = PicardConfig {
            n_q: 6,
            n_b: 33,
            b_max: 4.0,
            tol: 2e-2,
            ..PicardConfig::new(1.0, McConfig::new(20_000, 100, 6))
        };
        let out = picard_solve(&sigma, &cfg).unwrap();
        let report = zero_set_check(&out.field, &sigma, 1e-12, 1e-10);
        assert!(report.pass, "{report:?}");
        // zeros exactly on the b <= 0 half-line
        assert!(report.sigma_zeros.iter().all(|&b| b <= 1e-12));
        assert_eq!(report.sigma_zeros.len(), 17);
    }
}

/// Sample a closed-form oracle onto a grid-backed field (provenance Oracle).
pub fn field_from_oracle(
    oracle: &oracle::OracleJ,
    q0: f64,
    n_q: usize,
    b_max: f64,
    n_b: usize,
) -> DecouplingField {
    assert!(q0 < oracle.validity());
    let q_grid: Vec<f64> = (0..n_q)
        .map(|i| q0 * i as f64 / (n_q - 1) as f64)
        .collect();
    let b_min = -b_max;
    let b_step = 2.0 * b_max / (n_b - 1) as f64;
    let mut values = Vec::with_capacity(n_q * n_b);
    for &q in &q_grid {
        for j in 0..n_b {
            let b = b_min + b_step * j as f64;
            values.push(oracle.eval_scalar(q, b).expect("inside validity"));
        }
    }
    let grid = GridField1::new(q_grid, b_min, b_step, n_b, values);
    let lip = grid.lipschitz_per_q();
    let lip_top = lip.last().copied().unwrap().max(1e-12);
    DecouplingField {
        certified_horizon: q0 + 1.0 / (lip_top * lip_top),
        grid,
        provenance: Provenance::Oracle,
        lipschitz_per_q: lip,
        sigma_label: oracle.label(),
        residual_trajectory: Vec::new(),
        stderr_x: 0.0,
    }
}
