//! Generic Ito-SDE machinery: the forward solution operator, the fixed-point
//! residual, tree-correlated Brownian drivers, the multipoint system, and
//! Monte Carlo ensembles.
//!
//! The only scheme is Euler-Maruyama with equal steps and left-endpoint
//! (Ito) evaluation of the diffusivity: the coefficients this crate feeds in
//! are merely Lipschitz, so strong order 1/2 is the honest ceiling and a
//! higher-order scheme would buy nothing.

pub mod rng;
pub mod tree;

use crate::psd::PsdMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("requested horizon {requested} exceeds field horizon {horizon}")]
    HorizonExceeded { requested: f64, horizon: f64 },
    #[error("path {path} blew up at step {step}: |x| = {value:.3e} (guard {guard:.3e})")]
    Blowup {
        path: usize,
        step: usize,
        value: f64,
        guard: f64,
    },
    #[error("ensemble does not carry stored paths/increments")]
    MissingPaths,
    #[error("dimension mismatch: field has m={field}, input has m={input}")]
    DimMismatch { field: usize, input: usize },
    #[error("steps must be >= 1")]
    NoSteps,
}

/// m = 1 field J(q, b) on a rectangular grid, piecewise linear in q and b,
/// linear extrapolation in b with the boundary slope (clamped at zero so the
/// values stay admissible as diffusivities).
#[derive(Debug, Clone)]
pub struct GridField1 {
    pub q_grid: Vec<f64>,
    pub b_min: f64,
    pub b_step: f64,
    pub n_b: usize,
    /// values[iq * n_b + ib]
    pub values: Vec<f64>,
    /// Set when the q-grid is uniform; enables O(1) slice lookup.
    q_step: Option<f64>,
}

impl GridField1 {
    pub fn new(q_grid: Vec<f64>, b_min: f64, b_step: f64, n_b: usize, values: Vec<f64>) -> Self {
        assert_eq!(q_grid.len() * n_b, values.len());
        assert!(q_grid.windows(2).all(|w| w[1] > w[0]));
        let q_step = if q_grid.len() >= 2 {
            let d = q_grid[1] - q_grid[0];
            let uniform = q_grid
                .windows(2)
                .all(|w| ((w[1] - w[0]) - d).abs() <= 1e-12 * (1.0 + d));
            uniform.then_some(d)
        } else {
            None
        };
        GridField1 {
            q_grid,
            b_min,
            b_step,
            n_b,
            values,
            q_step,
        }
    }

    pub fn b_max(&self) -> f64 {
        self.b_min + self.b_step * (self.n_b - 1) as f64
    }

    pub fn b_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_b).map(move |i| self.b_min + self.b_step * i as f64)
    }

    pub fn horizon(&self) -> f64 {
        *self.q_grid.last().unwrap()
    }

    #[inline]
    fn eval_slice(&self, row: &[f64], b: f64) -> f64 {
        let n = self.n_b;
        let t = (b - self.b_min) / self.b_step;
        let v = if t <= 0.0 {
            // extrapolate with the leftmost slope
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

    #[inline]
    pub fn eval(&self, q: f64, b: f64) -> f64 {
        let nq = self.q_grid.len();
        if nq == 1 || q <= self.q_grid[0] {
            return self.eval_slice(&self.values[0..self.n_b], b);
        }
        if q >= self.q_grid[nq - 1] {
            return self.eval_slice(&self.values[(nq - 1) * self.n_b..], b);
        }
        let i = if let Some(dq) = self.q_step {
            (((q - self.q_grid[0]) / dq) as usize).min(nq - 2)
        } else {
            match self
                .q_grid
                .binary_search_by(|p| p.partial_cmp(&q).unwrap())
            {
                Ok(i) => i.min(nq - 2),
                Err(i) => i - 1,
            }
        };
        let (q0, q1) = (self.q_grid[i], self.q_grid[i + 1]);
        let t = (q - q0) / (q1 - q0);
        let lo = self.eval_slice(&self.values[i * self.n_b..(i + 1) * self.n_b], b);
        let hi = self.eval_slice(&self.values[(i + 1) * self.n_b..(i + 2) * self.n_b], b);
        lo + t * (hi - lo)
    }

    /// Max adjacent finite-difference slope per q-row.
    pub fn lipschitz_per_q(&self) -> Vec<f64> {
        self.q_grid
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let row = &self.values[i * self.n_b..(i + 1) * self.n_b];
                row.windows(2)
                    .map(|w| ((w[1] - w[0]) / self.b_step).abs())
                    .fold(0.0f64, f64::max)
            })
            .collect()
    }

    pub fn row(&self, iq: usize) -> &[f64] {
        &self.values[iq * self.n_b..(iq + 1) * self.n_b]
    }
}

#[derive(Clone)]
enum GKind {
    /// Scalar closed form g(q, b).
    ClosedScalar(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// Matrix closed form g(q, b).
    ClosedMatrix(Arc<dyn Fn(f64, &[f64]) -> PsdMatrix + Send + Sync>),
    /// Interpolated grid, m = 1.
    Grid(Arc<GridField1>),
}

/// Time-dependent diffusivity g(q, b), q in [0, horizon], with a finite
/// uniform-in-q Lipschitz bound (the admissibility condition for the forward
/// SDE solution operator).
#[derive(Clone)]
pub struct DiffusivityField {
    pub m: usize,
    pub horizon: f64,
    pub lipschitz: f64,
    kind: GKind,
    pub label: String,
}

impl std::fmt::Debug for DiffusivityField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "DiffusivityField({}, m={}, horizon={}, lip={})",
            self.label, self.m, self.horizon, self.lipschitz
        )
    }
}

impl DiffusivityField {
    pub fn closed_scalar(
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        horizon: f64,
        lipschitz: f64,
        label: impl Into<String>,
    ) -> Self {
        DiffusivityField {
            m: 1,
            horizon,
            lipschitz,
            kind: GKind::ClosedScalar(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn closed_matrix(
        m: usize,
        f: impl Fn(f64, &[f64]) -> PsdMatrix + Send + Sync + 'static,
        horizon: f64,
        lipschitz: f64,
        label: impl Into<String>,
    ) -> Self {
        DiffusivityField {
            m,
            horizon,
            lipschitz,
            kind: GKind::ClosedMatrix(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn constant_scalar(c: f64, horizon: f64) -> Self {
        Self::closed_scalar(move |_, _| c, horizon, 0.0, format!("const({c})"))
    }

    /// Time-constant scalar diffusivity from a nonlinearity sigma(b).
    pub fn from_sigma_scalar(sigma: &crate::nonlinearity::Nonlinearity, horizon: f64) -> Self {
        assert_eq!(sigma.dim(), 1);
        let s = sigma.clone();
        Self::closed_scalar(
            move |_, b| s.eval_scalar(b),
            horizon,
            sigma.lipschitz,
            format!("sigma[{}]", sigma.label),
        )
    }

    pub fn from_grid(grid: GridField1, lipschitz: f64, label: impl Into<String>) -> Self {
        DiffusivityField {
            m: 1,
            horizon: grid.horizon(),
            lipschitz,
            kind: GKind::Grid(Arc::new(grid)),
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval_scalar(&self, q: f64, b: f64) -> f64 {
        match &self.kind {
            GKind::ClosedScalar(f) => f(q, b).max(0.0),
            GKind::Grid(g) => g.eval(q, b),
            GKind::ClosedMatrix(f) => f(q, &[b]).as_scalar(),
        }
    }

    pub fn eval(&self, q: f64, b: &[f64]) -> PsdMatrix {
        match &self.kind {
            GKind::ClosedScalar(f) => PsdMatrix::scalar(f(q, b[0]).max(0.0)).unwrap(),
            GKind::Grid(g) => PsdMatrix::scalar(g.eval(q, b[0])).unwrap(),
            GKind::ClosedMatrix(f) => f(q, b),
        }
    }

    pub fn grid(&self) -> Option<&GridField1> {
        match &self.kind {
            GKind::Grid(g) => Some(g),
            _ => None,
        }
    }
}

/// Monte Carlo budget and reproducibility knobs for one solve.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// Abort threshold |x| > blowup_factor * (1 + |a|).
    pub blowup_factor: f64,
    pub store_paths: bool,
}

impl McConfig {
    pub fn new(n_paths: usize, steps: usize, seed: u64) -> Self {
        McConfig {
            n_paths,
            steps,
            seed,
            blowup_factor: 1e6,
            store_paths: false,
        }
    }
}

/// Stored trajectories: values on the step grid plus the Brownian increments
/// that generated them (needed by the fixed-point residual).
#[derive(Debug, Clone)]
pub struct PathStore {
    pub steps: usize,
    pub m: usize,
    /// values[path * (steps+1) * m + k * m + c]
    pub values: Vec<f64>,
    /// increments[path * steps * m + k * m + c]
    pub increments: Vec<f64>,
}

/// Monte Carlo sample set of SDE endpoints (optionally with full paths).
#[derive(Debug, Clone)]
pub struct SdeEnsemble {
    pub m: usize,
    pub n_paths: usize,
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
    pub initial: Vec<f64>,
    /// endpoints[path * m + c]
    pub endpoints: Vec<f64>,
    pub paths: Option<PathStore>,
}

impl SdeEnsemble {
    pub fn endpoint(&self, path: usize) -> &[f64] {
        &self.endpoints[path * self.m..(path + 1) * self.m]
    }

    /// Endpoint samples of one component.
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.n_paths)
            .map(|p| self.endpoints[p * self.m + c])
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.m];
        for p in 0..self.n_paths {
            for c in 0..self.m {
                mu[c] += self.endpoints[p * self.m + c];
            }
        }
        mu.iter_mut().for_each(|x| *x /= self.n_paths as f64);
        mu
    }

    /// Mean of |X|^2 over the ensemble.
    pub fn second_moment(&self) -> f64 {
        self.endpoints.iter().map(|x| x * x).sum::<f64>() / self.n_paths as f64
    }

    pub fn assert_finite(&self) {
        assert!(self.endpoints.iter().all(|x| x.is_finite()));
    }
}

/// Euler-Maruyama solve of d Theta = g(Q - q, Theta) dB, Theta(0) = a, up to
/// q = q_horizon, returning the endpoint ensemble.
///
/// Deterministic for fixed `(inputs, seed)`: path p draws from the stream
/// `(seed, p)`, so enlarging `n_paths` never perturbs earlier paths and the
/// result is independent of the rayon worker count.
pub fn solve_theta(
    g: &DiffusivityField,
    a: &[f64],
    q_horizon: f64,
    mc: &McConfig,
) -> Result<SdeEnsemble, SdeError> {
    if a.len() != g.m {
        return Err(SdeError::DimMismatch {
            field: g.m,
            input: a.len(),
        });
    }
    if q_horizon > g.horizon * (1.0 + 1e-12) {
        return Err(SdeError::HorizonExceeded {
            requested: q_horizon,
            horizon: g.horizon,
        });
    }
    if mc.steps == 0 {
        return Err(SdeError::NoSteps);
    }
    let m = g.m;
    let steps = mc.steps;
    let dq = q_horizon / steps as f64;
    let sqrt_dq = dq.sqrt();
    let a_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let guard = mc.blowup_factor * (1.0 + a_norm);

    struct PathOut {
        end: Vec<f64>,
        vals: Vec<f64>,
        incs: Vec<f64>,
        blown: Option<(usize, f64)>,
    }

    let run_path = |p: usize| -> PathOut {
        let mut rng = rng::stream_rng(mc.seed, p as u64);
        let mut x = a.to_vec();
        let mut vals = Vec::new();
        let mut incs = Vec::new();
        if mc.store_paths {
            vals.reserve((steps + 1) * m);
            incs.reserve(steps * m);
            vals.extend_from_slice(&x);
        }
        if m == 1 {
            let mut xv = x[0];
            for k in 0..steps {
                let q = k as f64 * dq;
                let gv = g.eval_scalar(q_horizon - q, xv);
                let z: f64 = StandardNormal.sample(&mut rng);
                let db = z * sqrt_dq;
                xv += gv * db;
                if mc.store_paths {
                    vals.push(xv);
                    incs.push(db);
                }
                if xv.abs() > guard {
                    return PathOut {
                        end: vec![xv],
                        vals,
                        incs,
                        blown: Some((k, xv.abs())),
                    };
                }
            }
            x[0] = xv;
        } else {
            let mut db = vec![0.0; m];
            for k in 0..steps {
                let q = k as f64 * dq;
                let gv = g.eval(q_horizon - q, &x);
                for d in db.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *d = z * sqrt_dq;
                }
                let gm = gv.matrix();
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += gm[(i, j)] * db[j];
                    }
                    x[i] += acc;
                }
                if mc.store_paths {
                    vals.extend_from_slice(&x);
                    incs.extend_from_slice(&db);
                }
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > guard {
                    return PathOut {
                        end: x.clone(),
                        vals,
                        incs,
                        blown: Some((k, norm)),
                    };
                }
            }
        }
        PathOut {
            end: x,
            vals,
            incs,
            blown: None,
        }
    };

    let outs: Vec<PathOut> = (0..mc.n_paths).into_par_iter().map(run_path).collect();

    for (p, o) in outs.iter().enumerate() {
        if let Some((step, value)) = o.blown {
            return Err(SdeError::Blowup {
                path: p,
                step,
                value,
                guard,
            });
        }
    }

    let mut endpoints = Vec::with_capacity(mc.n_paths * m);
    for o in &outs {
        endpoints.extend_from_slice(&o.end);
    }
    let paths = if mc.store_paths {
        let mut values = Vec::with_capacity(mc.n_paths * (steps + 1) * m);
        let mut increments = Vec::with_capacity(mc.n_paths * steps * m);
        for o in outs {
            values.extend_from_slice(&o.vals);
            increments.extend_from_slice(&o.incs);
        }
        Some(PathStore {
            steps,
            m,
            values,
            increments,
        })
    } else {
        None
    };

    Ok(SdeEnsemble {
        m,
        n_paths: mc.n_paths,
        horizon: q_horizon,
        steps,
        seed: mc.seed,
        initial: a.to_vec(),
        endpoints,
        paths,
    })
}

/// Fixed-point residual of a stored ensemble against a diffusivity `g`:
/// the sup over the (even) step grid of the L^2(sample) distance between the
/// path and `a + int_0^q g(Q - p, path(p)) dB(p)`, where the integral is
/// recomputed from the stored increments at half resolution (left-endpoint
/// Ito evaluation on pairs of increments).
///
/// For an ensemble generated by `solve_theta` with the same `g`, this is the
/// coupling distance between two Euler resolutions of the same integral, the
/// pure discretization residual; it scales like sqrt(Q / steps).
pub fn fixed_point_residual(
    g: &DiffusivityField,
    ensemble: &SdeEnsemble,
    a: &[f64],
    q_horizon: f64,
) -> Result<f64, SdeError> {
    let store = ensemble.paths.as_ref().ok_or(SdeError::MissingPaths)?;
    let m = ensemble.m;
    let steps = store.steps;
    let dq = q_horizon / steps as f64;
    let per_path = (steps + 1) * m;
    let half = steps / 2;
    let mut sup_sq = vec![0.0f64; half + 1];
    let mut integral = vec![0.0; m];
    for p in 0..ensemble.n_paths {
        let vals = &store.values[p * per_path..(p + 1) * per_path];
        let incs = &store.increments[p * steps * m..(p + 1) * steps * m];
        integral.iter_mut().for_each(|x| *x = 0.0);
        for c2 in 0..=half {
            let k = 2 * c2;
            let mut d2 = 0.0;
            for c in 0..m {
                let r = vals[k * m + c] - a[c] - integral[c];
                d2 += r * r;
            }
            sup_sq[c2] += d2;
            if c2 == half {
                break;
            }
            // left-endpoint evaluation over the doubled step [q_k, q_{k+2}]
            let q_eval = q_horizon - k as f64 * dq;
            if m == 1 {
                let gv = g.eval_scalar(q_eval, vals[k]);
                integral[0] += gv * (incs[k] + incs[k + 1]);
            } else {
                let gv = g.eval(q_eval, &vals[k * m..(k + 1) * m]);
                let gm = gv.matrix();
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += gm[(i, j)] * (incs[k * m + j] + incs[(k + 1) * m + j]);
                    }
                    integral[i] += acc;
                }
            }
        }
    }
    let n = ensemble.n_paths as f64;
    Ok(sup_sq
        .iter()
        .map(|s| (s / n).sqrt())
        .fold(0.0f64, f64::max))
}
