//! Finite-difference solver for the degenerate quasilinear equation
//! dH/dq = (1/2) H d^2H/db^2 (scalar case), with residual certification and
//! comparison against the root decoupling function.
//!
//! The stepping is explicit Euler with centered second differences and a
//! CFL-limited adaptive step dq <= cfl * h^2 / max(H): the diffusivity H/2
//! vanishes wherever H does, which makes implicit solvers fragile exactly
//! where the equation is interesting, while the explicit update is monotone
//! under the CFL condition and preserves zeros of the data exactly (the
//! update multiplies by H itself).
//!
//! Boundary condition: ghost nodes are extrapolated quadratically, i.e. the
//! boundary node reuses its inner neighbor's second difference (zero third
//! derivative). This is exact for the whole quadratic closed-form family,
//! whose second difference is constant in b.

use crate::decoupling::DecouplingField;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("CFL forced dq = {dq:.3e} below the floor at q = {q:.6}: stiff/blow-up")]
    Stiff { q: f64, dq: f64 },
    #[error("solution exceeded the blow-up cap at q = {q:.6} (max H = {max_h:.3e}); last valid q = {q:.6}")]
    Blowup { q: f64, max_h: f64 },
    #[error("horizon mismatch: H reaches {h_horizon}, J reaches {j_horizon}, probe needs {requested}")]
    HorizonMismatch {
        h_horizon: f64,
        j_horizon: f64,
        requested: f64,
    },
    #[error("field must carry at least 3 snapshots for residual differencing")]
    TooFewSnapshots,
}

#[derive(Debug, Clone)]
pub struct PdeConfig {
    pub b_min: f64,
    pub b_max: f64,
    /// Node count; spacing h_b = (b_max - b_min) / (n_b - 1).
    pub n_b: usize,
    /// CFL number for the diffusivity H/2 (dq <= cfl h^2 / max H).
    pub cfl: f64,
    /// Snapshot count; 0 picks ceil(q0/h_b) + 1, tying the q-resolution of
    /// the record to the spatial resolution.
    pub n_snapshots: usize,
    pub dq_floor: f64,
    /// Abort threshold on max H.
    pub h_cap: f64,
}

impl PdeConfig {
    /// Symmetric domain [-b_max, b_max].
    pub fn new(b_max: f64, h_b: f64) -> Self {
        Self::on_interval(-b_max, b_max, h_b)
    }

    pub fn on_interval(b_min: f64, b_max: f64, h_b: f64) -> Self {
        let n_b = ((b_max - b_min) / h_b).round() as usize + 1;
        PdeConfig {
            b_min,
            b_max,
            n_b,
            cfl: 0.4,
            n_snapshots: 0,
            dq_floor: 1e-9,
            h_cap: 1e12,
        }
    }

    pub fn h_b(&self) -> f64 {
        (self.b_max - self.b_min) / (self.n_b - 1) as f64
    }
}

/// Solved field H(q, b) >= 0 recorded on snapshot levels.
#[derive(Debug, Clone)]
pub struct HField {
    pub b_min: f64,
    pub h_b: f64,
    pub n_b: usize,
    pub q_levels: Vec<f64>,
    /// slices[k * n_b + j] = H(q_levels[k], b_j)
    pub slices: Vec<f64>,
    /// Nodes clamped at zero during the march (rounding only: the update is
    /// positivity-preserving under the CFL condition).
    pub floor_events: usize,
    /// Smallest step the CFL condition produced.
    pub min_dq: f64,
    pub steps_taken: usize,
}

impl HField {
    pub fn horizon(&self) -> f64 {
        *self.q_levels.last().unwrap()
    }

    pub fn b_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_b).map(move |j| self.b_min + self.h_b * j as f64)
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.slices[k * self.n_b..(k + 1) * self.n_b]
    }

    /// Bilinear interpolation (clamped to the domain).
    pub fn eval(&self, q: f64, b: f64) -> f64 {
        let nk = self.q_levels.len();
        let k = if q <= self.q_levels[0] {
            0
        } else if q >= self.q_levels[nk - 1] {
            nk - 2
        } else {
            match self
                .q_levels
                .binary_search_by(|p| p.partial_cmp(&q).unwrap())
            {
                Ok(i) => i.min(nk - 2),
                Err(i) => i - 1,
            }
        };
        let (q0, q1) = (self.q_levels[k], self.q_levels[k + 1]);
        let t = ((q - q0) / (q1 - q0)).clamp(0.0, 1.0);
        let tb = ((b - self.b_min) / self.h_b).clamp(0.0, (self.n_b - 1) as f64);
        let j = (tb as usize).min(self.n_b - 2);
        let fb = tb - j as f64;
        let at = |k: usize, j: usize| self.slices[k * self.n_b + j];
        let lo = at(k, j) * (1.0 - fb) + at(k, j + 1) * fb;
        let hi = at(k + 1, j) * (1.0 - fb) + at(k + 1, j + 1) * fb;
        lo * (1.0 - t) + hi * t
    }

    /// Build a field directly from a closed form (for residual tests).
    pub fn inject(
        h: impl Fn(f64, f64) -> f64,
        q_levels: Vec<f64>,
        b_max: f64,
        n_b: usize,
    ) -> HField {
        let b_min = -b_max;
        let h_b = 2.0 * b_max / (n_b - 1) as f64;
        let mut slices = Vec::with_capacity(q_levels.len() * n_b);
        for &q in &q_levels {
            for j in 0..n_b {
                slices.push(h(q, b_min + h_b * j as f64));
            }
        }
        HField {
            b_min,
            h_b,
            n_b,
            q_levels,
            slices,
            floor_events: 0,
            min_dq: f64::INFINITY,
            steps_taken: 0,
        }
    }

    /// Max adjacent finite-difference slope of sqrt(H) per level.
    pub fn sqrt_lipschitz_per_level(&self) -> Vec<f64> {
        (0..self.q_levels.len())
            .map(|k| {
                self.level(k)
                    .windows(2)
                    .map(|w| ((w[1].max(0.0).sqrt() - w[0].max(0.0).sqrt()) / self.h_b).abs())
                    .fold(0.0f64, f64::max)
            })
            .collect()
    }
}

/// One centered second-difference sweep; boundary nodes reuse the inner
/// neighbor's value (quadratic ghost extrapolation).
fn second_difference(h: &[f64], h_b: f64, out: &mut [f64]) {
    let n = h.len();
    let inv = 1.0 / (h_b * h_b);
    for j in 1..n - 1 {
        out[j] = (h[j + 1] - 2.0 * h[j] + h[j - 1]) * inv;
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
}

/// March dH/dq = 1/2 H D2 H from H(0, .) = sigma^2 up to q0.
pub fn solve_h(
    sigma_sq: impl Fn(f64) -> f64,
    q0: f64,
    cfg: &PdeConfig,
) -> Result<HField, PdeError> {
    assert!(cfg.n_b >= 5);
    let h_b = cfg.h_b();
    let b_min = cfg.b_min;
    let n = cfg.n_b;
    let n_snap = if cfg.n_snapshots == 0 {
        ((q0 / h_b).ceil() as usize).max(2) + 1
    } else {
        cfg.n_snapshots.max(2)
    };
    let q_levels: Vec<f64> = (0..n_snap)
        .map(|k| q0 * k as f64 / (n_snap - 1) as f64)
        .collect();

    let mut h: Vec<f64> = (0..n)
        .map(|j| sigma_sq(b_min + h_b * j as f64).max(0.0))
        .collect();
    let mut d2 = vec![0.0; n];
    let mut slices = Vec::with_capacity(n_snap * n);
    slices.extend_from_slice(&h);

    let mut q = 0.0;
    let mut floor_events = 0usize;
    let mut min_dq = f64::INFINITY;
    let mut steps = 0usize;
    for &target in &q_levels[1..] {
        while q < target {
            let h_max = h.iter().fold(0.0f64, |a, &x| a.max(x));
            if h_max > cfg.h_cap {
                return Err(PdeError::Blowup { q, max_h: h_max });
            }
            let mut dq = if h_max > 0.0 {
                cfg.cfl * h_b * h_b / h_max
            } else {
                target - q
            };
            if dq < cfg.dq_floor {
                return Err(PdeError::Stiff { q, dq });
            }
            if q + dq > target {
                dq = target - q;
            }
            min_dq = min_dq.min(dq);
            second_difference(&h, h_b, &mut d2);
            for j in 0..n {
                let next = h[j] + dq * 0.5 * h[j] * d2[j];
                if next < 0.0 {
                    floor_events += 1;
                    h[j] = 0.0;
                } else {
                    h[j] = next;
                }
            }
            q += dq;
            steps += 1;
        }
        slices.extend_from_slice(&h);
    }
    Ok(HField {
        b_min,
        h_b,
        n_b: n,
        q_levels,
        slices,
        floor_events,
        min_dq,
        steps_taken: steps,
    })
}

/// Independent recomputation of dH/dq - 1/2 H D2 H on interior snapshot
/// nodes, reported in the L^1(q; L^inf(b)) norm.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualReport {
    pub l1_linf: f64,
    pub per_level: Vec<(f64, f64)>,
    pub excluded_nodes: usize,
    /// Radius (in units of h_b) excluded around declared kinks.
    pub kink_radius: f64,
}

pub fn residual_check(field: &HField, kinks: &[f64]) -> Result<ResidualReport, PdeError> {
    let nk = field.q_levels.len();
    if nk < 3 {
        return Err(PdeError::TooFewSnapshots);
    }
    let n = field.n_b;
    let exclusion = 3.0 * field.h_b;
    let mut per_level = Vec::with_capacity(nk - 2);
    let mut excluded = 0usize;
    let mut l1 = 0.0;
    for k in 1..nk - 1 {
        let dq_m = field.q_levels[k] - field.q_levels[k - 1];
        let dq_p = field.q_levels[k + 1] - field.q_levels[k];
        let lo = field.level(k - 1);
        let mid = field.level(k);
        let hi = field.level(k + 1);
        let mut linf: f64 = 0.0;
        for j in 1..n - 1 {
            let b = field.b_min + field.h_b * j as f64;
            if kinks.iter().any(|&kk| (b - kk).abs() < exclusion) {
                excluded += 1;
                continue;
            }
            // 3-point dH/dq on a possibly non-uniform level spacing
            let dqh = (hi[j] - mid[j]) / dq_p * (dq_m / (dq_m + dq_p))
                + (mid[j] - lo[j]) / dq_m * (dq_p / (dq_m + dq_p));
            let d2 = (mid[j + 1] - 2.0 * mid[j] + mid[j - 1]) / (field.h_b * field.h_b);
            let r = dqh - 0.5 * mid[j] * d2;
            linf = linf.max(r.abs());
        }
        per_level.push((field.q_levels[k], linf));
        // trapezoidal-in-q weight
        l1 += linf * 0.5 * (dq_m + dq_p);
    }
    Ok(ResidualReport {
        l1_linf: l1,
        per_level,
        excluded_nodes: excluded,
        kink_radius: 3.0,
    })
}

/// Discrepancy between sqrt(H) and a decoupling field J on a probe set,
/// in the weighted sup norm, with the error budget attached.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiscrepancyReport {
    pub sup_weighted: f64,
    pub worst_probe: (f64, f64),
    pub mc_stderr: f64,
    pub grid_budget: f64,
}

pub fn compare_to_decoupling(
    h_field: &HField,
    j_field: &DecouplingField,
    probes: &[(f64, f64)],
) -> Result<DiscrepancyReport, PdeError> {
    let mut sup = 0.0f64;
    let mut worst = (0.0, 0.0);
    for &(q, b) in probes {
        if q > h_field.horizon() * (1.0 + 1e-12) || q > j_field.horizon() * (1.0 + 1e-12) {
            return Err(PdeError::HorizonMismatch {
                h_horizon: h_field.horizon(),
                j_horizon: j_field.horizon(),
                requested: q,
            });
        }
        let root_h = h_field.eval(q, b).max(0.0).sqrt();
        let j = j_field.eval(q, b);
        let d = (root_h - j).abs() / (1.0 + b * b).sqrt();
        if d > sup {
            sup = d;
            worst = (q, b);
        }
    }
    Ok(DiscrepancyReport {
        sup_weighted: sup,
        worst_probe: worst,
        mc_stderr: j_field.stderr_x,
        grid_budget: h_field.h_b * h_field.h_b,
    })
}

/// Parallel map over several solves (used by the comparison-principle and
/// convergence suites).
pub fn solve_h_batch(
    sigmas: Vec<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    q0: f64,
    cfg: &PdeConfig,
) -> Vec<Result<HField, PdeError>> {
    sigmas
        .into_par_iter()
        .map(|s| solve_h(&s, q0, cfg))
        .collect()
}
