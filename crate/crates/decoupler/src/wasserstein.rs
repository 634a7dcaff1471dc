//! Empirical Wasserstein-2 distances.
//!
//! One dimension is exact via the quantile coupling (sorted samples, unequal
//! counts handled by merging quantile levels). Higher dimensions use an
//! exact optimal assignment up to 1024 points and a sliced approximation
//! above that, flagged in the result.

use rayon::prelude::*;

/// How a multivariate distance was computed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum W2Method {
    Exact1d,
    ExactAssignment,
    Sliced { directions: usize },
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct W2Distance {
    pub value: f64,
    pub method: W2Method,
}

/// Cutoff above which the exact assignment is replaced by slicing.
pub const ASSIGNMENT_LIMIT: usize = 1024;
/// Number of random projection directions used by the sliced estimate.
pub const SLICED_DIRECTIONS: usize = 64;

/// Exact empirical W2 between two scalar sample sets (any sizes >= 1).
pub fn w2_1d(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "empty samples");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    if xs.len() == ys.len() {
        let n = xs.len() as f64;
        return (xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n)
            .sqrt();
    }
    // Quantile-level sweep: integrate (F^-1 - G^-1)^2 over the merged level
    // partition of [0, 1].
    let (na, nb) = (xs.len(), ys.len());
    let mut total = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let mut level = 0.0f64;
    while i < na && j < nb {
        let la = (i + 1) as f64 / na as f64;
        let lb = (j + 1) as f64 / nb as f64;
        let next = la.min(lb);
        let d = xs[i] - ys[j];
        total += (next - level) * d * d;
        level = next;
        if la <= lb + 1e-15 {
            i += 1;
        }
        if lb <= la + 1e-15 {
            j += 1;
        }
    }
    total.sqrt()
}

/// Empirical W2 between multivariate sample sets (rows are samples).
///
/// Equal sample counts are required beyond one dimension; up to
/// [`ASSIGNMENT_LIMIT`] points the optimal assignment is solved exactly,
/// above that a sliced approximation with [`SLICED_DIRECTIONS`] random
/// directions is returned and flagged.
pub fn w2(a: &[Vec<f64>], b: &[Vec<f64>], seed: u64) -> W2Distance {
    assert!(!a.is_empty() && !b.is_empty(), "empty samples");
    let dim = a[0].len();
    assert!(b.iter().all(|r| r.len() == dim) && a.iter().all(|r| r.len() == dim));
    if dim == 1 {
        let xs: Vec<f64> = a.iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = b.iter().map(|r| r[0]).collect();
        return W2Distance {
            value: w2_1d(&xs, &ys),
            method: W2Method::Exact1d,
        };
    }
    assert_eq!(
        a.len(),
        b.len(),
        "multivariate W2 requires equal sample counts"
    );
    if a.len() <= ASSIGNMENT_LIMIT {
        let n = a.len();
        let cost = |i: usize, j: usize| -> f64 {
            a[i].iter()
                .zip(&b[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        };
        let total = assignment_cost(n, &cost);
        W2Distance {
            value: (total / n as f64).sqrt(),
            method: W2Method::ExactAssignment,
        }
    } else {
        let value = sliced_w2(a, b, SLICED_DIRECTIONS, seed);
        W2Distance {
            value,
            method: W2Method::Sliced {
                directions: SLICED_DIRECTIONS,
            },
        }
    }
}

/// Sliced W2: root-mean-square of exact 1d distances over random unit
/// directions.
pub fn sliced_w2(a: &[Vec<f64>], b: &[Vec<f64>], directions: usize, seed: u64) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    let dim = a[0].len();
    let dirs: Vec<Vec<f64>> = (0..directions)
        .map(|d| {
            let mut rng = crate::sde::rng::stream_rng(seed, d as u64);
            let mut v: Vec<f64> = (0..dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect();
    let mean_sq: f64 = dirs
        .par_iter()
        .map(|dir| {
            let proj = |rows: &[Vec<f64>]| -> Vec<f64> {
                rows.iter()
                    .map(|r| r.iter().zip(dir).map(|(x, d)| x * d).sum())
                    .collect()
            };
            let d = w2_1d(&proj(a), &proj(b));
            d * d
        })
        .sum::<f64>()
        / directions as f64;
    mean_sq.sqrt()
}

/// Exact minimum-cost perfect matching on an n x n cost matrix given as a
/// closure (Jonker-Volgenant style shortest augmenting paths, O(n^3)).
pub fn assignment_cost(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    // Standard JV/Hungarian with potentials; rows 1..=n, columns 1..=n,
    // index 0 is the virtual source.
    const INF: f64 = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost(p[j] - 1, j - 1)).sum()
}
