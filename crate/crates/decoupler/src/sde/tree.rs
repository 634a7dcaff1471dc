//! Tree-correlated Brownian drivers and the multipoint forward system.
//!
//! The correlation structure is a symmetric matrix p where `p[(i,j)]` is the
//! clock time until which drivers i and j share increments; consistency
//! requires the ultrametric property p_ij >= min(p_ik, p_kj). Increments are
//! drawn once per equivalence class per step from a stream keyed by the
//! class representative, so merged drivers are bitwise identical while
//! merged and independent afterwards.

use super::rng::stream_rng3;
use super::{DiffusivityField, SdeError};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("correlation not ultrametric at triple ({i},{j},{k}): p_ij={pij} < min(p_ik={pik}, p_kj={pkj})")]
    NotUltrametric {
        i: usize,
        j: usize,
        k: usize,
        pij: f64,
        pik: f64,
        pkj: f64,
    },
    #[error("correlated pair ({i},{j}) has mismatched initial values")]
    InitialValueMismatch { i: usize, j: usize },
    #[error("entry p[({i},{j})] = {value} outside [0, horizon]")]
    BadEntry { i: usize, j: usize, value: f64 },
    #[error(transparent)]
    Sde(#[from] SdeError),
}

/// Symmetric separation-time matrix; the diagonal carries the horizon of
/// each driver.
#[derive(Debug, Clone)]
pub struct TreeCorrelation {
    n: usize,
    p: Vec<f64>,
}

impl TreeCorrelation {
    /// Validates symmetry, range, and the ultrametric property (up to `tol`).
    pub fn new(n: usize, p: Vec<f64>, tol: f64) -> Result<Self, TreeError> {
        assert_eq!(p.len(), n * n);
        let at = |i: usize, j: usize| p[i * n + j];
        for i in 0..n {
            for j in 0..n {
                let v = at(i, j);
                if v < 0.0 || v > at(i, i).max(at(j, j)) + tol || (at(i, j) - at(j, i)).abs() > tol
                {
                    return Err(TreeError::BadEntry { i, j, value: v });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == j || j == k || i == k {
                        continue;
                    }
                    let floor = at(i, k).min(at(k, j));
                    if at(i, j) < floor - tol {
                        return Err(TreeError::NotUltrametric {
                            i,
                            j,
                            k,
                            pij: at(i, j),
                            pik: at(i, k),
                            pkj: at(k, j),
                        });
                    }
                }
            }
        }
        Ok(TreeCorrelation { n, p })
    }

    /// All drivers share the full horizon.
    pub fn fully_shared(n: usize, horizon: f64) -> Self {
        TreeCorrelation {
            n,
            p: vec![horizon; n * n],
        }
    }

    /// Independent drivers with the given common horizon.
    pub fn independent(n: usize, horizon: f64) -> Self {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = horizon;
        }
        TreeCorrelation { n, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn horizon(&self) -> f64 {
        (0..self.n)
            .map(|i| self.get(i, i))
            .fold(0.0f64, f64::max)
    }

    /// Class representative of driver i at clock time q: the smallest index
    /// still sharing increments with i.
    fn representative(&self, i: usize, q: f64) -> usize {
        (0..self.n)
            .find(|&j| self.get(i, j) > q)
            .unwrap_or(i)
            .min(i)
    }
}

/// N correlated m-dimensional Brownian paths on the uniform grid
/// `q_k = k * horizon / steps`, satisfying
/// d[B_i, B_j](q) = 1_{[0, p_ij]}(q) Id_m.
///
/// Returns paths\[i\] as a flat (steps+1) x m array.
pub fn tree_brownian(
    corr: &TreeCorrelation,
    horizon: f64,
    steps: usize,
    m: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = corr.n();
    let dq = horizon / steps as f64;
    let sqrt_dq = dq.sqrt();
    let mut paths = vec![vec![0.0; (steps + 1) * m]; n];
    let mut inc = vec![0.0; m];
    for k in 0..steps {
        let q = k as f64 * dq;
        // one increment per equivalence class, keyed by its representative
        for i in 0..n {
            let rep = corr.representative(i, q);
            let mut rng = stream_rng3(seed, k as u64, rep as u64, 0x7ee5);
            for d in inc.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *d = z * sqrt_dq;
            }
            for c in 0..m {
                paths[i][(k + 1) * m + c] = paths[i][k * m + c] + inc[c];
            }
        }
    }
    paths
}

/// Joint endpoint ensemble of the multipoint system
/// d Psi_i(q) = J(H - q, Psi_i(q)) dB_i(q), Psi_i(0) = initial_values[i],
/// where H = `field_horizon` and the B_i are tree-correlated.
///
/// `q_targets[i]` is the clock time at which leaf i is read off (snapped to
/// the step grid). Drivers with p_ij > 0 must start from identical values;
/// their paths then coincide bitwise until the separation time.
pub struct MultipointEnsemble {
    pub n_leaves: usize,
    pub m: usize,
    pub n_samples: usize,
    /// samples[s * n_leaves * m + i * m + c]
    pub samples: Vec<f64>,
}

impl MultipointEnsemble {
    pub fn leaf_component(&self, leaf: usize, c: usize) -> Vec<f64> {
        let w = self.n_leaves * self.m;
        (0..self.n_samples)
            .map(|s| self.samples[s * w + leaf * self.m + c])
            .collect()
    }

    /// Joint samples as rows of dimension n_leaves * m.
    pub fn joint_rows(&self) -> Vec<Vec<f64>> {
        let w = self.n_leaves * self.m;
        (0..self.n_samples)
            .map(|s| self.samples[s * w..(s + 1) * w].to_vec())
            .collect()
    }
}

pub fn solve_multipoint_psi(
    j_field: &DiffusivityField,
    corr: &TreeCorrelation,
    initial_values: &[Vec<f64>],
    q_targets: &[f64],
    field_horizon: f64,
    steps: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MultipointEnsemble, TreeError> {
    let n = corr.n();
    let m = j_field.m;
    assert_eq!(initial_values.len(), n);
    assert_eq!(q_targets.len(), n);
    for i in 0..n {
        for j in (i + 1)..n {
            if corr.get(i, j) > 0.0 && initial_values[i] != initial_values[j] {
                return Err(TreeError::InitialValueMismatch { i, j });
            }
        }
    }
    let clock_span = q_targets.iter().fold(corr.horizon(), |a, &q| a.max(q));
    let dq = clock_span / steps as f64;
    let sqrt_dq = dq.sqrt();
    use rayon::prelude::*;
    let samples: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut state: Vec<Vec<f64>> = initial_values.to_vec();
            let mut out = vec![vec![0.0; m]; n];
            let mut recorded = vec![false; n];
            let mut inc = vec![0.0; m];
            for k in 0..steps {
                let q = k as f64 * dq;
                for i in 0..n {
                    if !recorded[i] && q_targets[i] <= q + 1e-15 {
                        out[i] = state[i].clone();
                        recorded[i] = true;
                    }
                    if recorded[i] {
                        continue;
                    }
                    let rep = corr.representative(i, q);
                    let mut rng = stream_rng3(seed, s as u64, (k as u64) << 20 | rep as u64, 1);
                    for d in inc.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *d = z * sqrt_dq;
                    }
                    // leaves read the field at remaining time
                    if m == 1 {
                        let gv = j_field.eval_scalar(field_horizon - q, state[i][0]);
                        state[i][0] += gv * inc[0];
                    } else {
                        let gv = j_field.eval(field_horizon - q, &state[i]);
                        let gm = gv.matrix();
                        let prev = state[i].clone();
                        for r in 0..m {
                            let mut acc = 0.0;
                            for cc in 0..m {
                                acc += gm[(r, cc)] * inc[cc];
                            }
                            state[i][r] = prev[r] + acc;
                        }
                    }
                }
            }
            for i in 0..n {
                if !recorded[i] {
                    out[i] = state[i].clone();
                }
            }
            out.into_iter().flatten().collect::<Vec<f64>>()
        })
        .collect();
    Ok(MultipointEnsemble {
        n_leaves: n,
        m,
        n_samples,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n - 1.0)
    }

    #[test]
    fn fully_shared_paths_are_bitwise_identical() {
        let corr = TreeCorrelation::fully_shared(3, 1.0);
        let paths = tree_brownian(&corr, 1.0, 64, 2, 9);
        assert_eq!(paths[0], paths[1]);
        assert_eq!(paths[0], paths[2]);
    }

    #[test]
    fn independent_paths_have_null_cross_covariance() {
        let corr = TreeCorrelation::independent(2, 1.0);
        let reps = 10_000;
        let mut e1 = Vec::with_capacity(reps);
        let mut e2 = Vec::with_capacity(reps);
        for s in 0..reps {
            let paths = tree_brownian(&corr, 1.0, 16, 1, 1000 + s as u64);
            e1.push(paths[0][16]);
            e2.push(paths[1][16]);
        }
        let c = cov(&e1, &e2);
        let se = 1.0 / (reps as f64).sqrt();
        assert!(c.abs() < 3.0 * se, "cov {c}");
    }

    #[test]
    fn three_leaf_covariance_matches_min_rule() {
        // N = 3, p12 = 0.5, p13 = p23 = 0.2, horizon 1:
        // Cov(B_i(1), B_j(1)) = min(1, p_ij) = p_ij.
        let n = 3;
        let mut p = vec![0.0; 9];
        for i in 0..3 {
            p[i * n + i] = 1.0;
        }
        p[1] = 0.5;
        p[3] = 0.5;
        p[2] = 0.2;
        p[6] = 0.2;
        p[5] = 0.2;
        p[7] = 0.2;
        let corr = TreeCorrelation::new(n, p, 1e-12).unwrap();
        let reps = 10_000;
        let mut ends = vec![Vec::with_capacity(reps); 3];
        for s in 0..reps {
            let paths = tree_brownian(&corr, 1.0, 50, 1, 77 + s as u64);
            for i in 0..3 {
                ends[i].push(paths[i][50]);
            }
        }
        // stderr of the covariance of two unit-variance Gaussians ~ sqrt((1+p^2)/n)
        for (i, j, expect) in [(0usize, 1usize, 0.5), (0, 2, 0.2), (1, 2, 0.2)] {
            let c = cov(&ends[i], &ends[j]);
            let se = ((1.0 + expect * expect) / reps as f64).sqrt();
            assert!(
                (c - expect).abs() < 3.0 * se,
                "cov({i},{j}) = {c}, expect {expect}"
            );
        }
    }

    #[test]
    fn covariation_matches_min_rule_at_interior_times() {
        // Cov(B_i(q), B_j(q)) = min(q, p_ij) also away from the horizon.
        let n = 2;
        let p = vec![1.0, 0.4, 0.4, 1.0];
        let corr = TreeCorrelation::new(n, p, 1e-12).unwrap();
        let reps = 8000;
        let steps = 50;
        for (k, q) in [(10usize, 0.2f64), (30, 0.6), (50, 1.0)] {
            let mut a = Vec::with_capacity(reps);
            let mut b = Vec::with_capacity(reps);
            for s in 0..reps {
                let paths = tree_brownian(&corr, 1.0, steps, 1, 300 + s as u64);
                a.push(paths[0][k]);
                b.push(paths[1][k]);
            }
            let c = cov(&a, &b);
            let expect = q.min(0.4);
            let se = ((q * q + expect * expect) / reps as f64).sqrt();
            assert!(
                (c - expect).abs() < 3.5 * se,
                "q = {q}: cov {c} vs {expect}"
            );
        }
    }

    #[test]
    fn non_ultrametric_rejected_with_triple() {
        let n = 3;
        let mut p = vec![0.0; 9];
        for i in 0..3 {
            p[i * n + i] = 1.0;
        }
        // p01 small but p02, p12 large: violates p01 >= min(p02, p21)
        p[1] = 0.1;
        p[3] = 0.1;
        p[2] = 0.6;
        p[6] = 0.6;
        p[5] = 0.6;
        p[7] = 0.6;
        match TreeCorrelation::new(n, p, 1e-12) {
            Err(TreeError::NotUltrametric { .. }) => {}
            other => panic!("expected ultrametric violation, got {other:?}"),
        }
    }

    #[test]
    fn multipoint_shared_and_split_behaviour() {
        let j = DiffusivityField::constant_scalar(1.0, 1.0);
        // fully shared: identical leaves
        let corr = TreeCorrelation::fully_shared(2, 1.0);
        let ens = solve_multipoint_psi(&j, &corr, &[vec![0.0], vec![0.0]], &[1.0, 1.0], 1.0, 32, 64, 5)
            .unwrap();
        assert_eq!(ens.leaf_component(0, 0), ens.leaf_component(1, 0));

        // split at 0.5 with constant unit diffusivity: Cov = 0.5
        let mut p = vec![1.0, 0.5, 0.5, 1.0];
        p[0] = 1.0;
        p[3] = 1.0;
        let corr = TreeCorrelation::new(2, p, 1e-12).unwrap();
        let ens = solve_multipoint_psi(
            &j,
            &corr,
            &[vec![0.0], vec![0.0]],
            &[1.0, 1.0],
            1.0,
            64,
            20_000,
            6,
        )
        .unwrap();
        let a = ens.leaf_component(0, 0);
        let b = ens.leaf_component(1, 0);
        let c = cov(&a, &b);
        let se = ((1.0 + 0.25) / 20_000f64).sqrt();
        assert!((c - 0.5).abs() < 3.0 * se, "cov {c}");

        // mismatched initials on a correlated pair are rejected
        let bad = solve_multipoint_psi(
            &j,
            &corr,
            &[vec![0.0], vec![1.0]],
            &[1.0, 1.0],
            1.0,
            8,
            4,
            1,
        );
        assert!(matches!(bad, Err(TreeError::InitialValueMismatch { .. })));
    }
}
