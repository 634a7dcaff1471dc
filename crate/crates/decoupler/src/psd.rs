//! Nonnegative-definite symmetric matrices and the matrix inequalities the
//! rest of the crate leans on.
//!
//! Everything here is dense and small: the target dimension `m` is at most 8
//! by contract, so a symmetric eigendecomposition is always affordable. The
//! inequality checkers ([`check_reverse_triangle`], [`check_powers_stormer`],
//! [`check_holder_schatten`]) are exposed as predicates that report the worst
//! violation over a weighted sample set, so property suites can drive them
//! with randomized inputs.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Relative symmetry tolerance: |A_ij - A_ji| <= SYM_TOL * (1 + |A|_F).
pub const SYM_TOL: f64 = 1e-12;
/// Relative eigenvalue floor: smallest eigenvalue >= -EIG_TOL * (1 + |A|_op).
pub const EIG_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PsdError {
    #[error("matrix is not symmetric: |A[{i},{j}] - A[{j},{i}]| = {delta:.3e} exceeds tolerance")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("not psd: eigenvalue {value:.6e} below tolerance -{tol:.3e}")]
    NotPsd { value: f64, tol: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({i},{j})")]
    NonFinite { i: usize, j: usize },
}

/// A nonnegative-definite symmetric real m x m matrix.
///
/// Construction validates symmetry and nonnegative-definiteness up to the
/// relative tolerances above; eigenvalues in `[-EIG_TOL * scale, 0)` are
/// accepted (the fields we take square roots of can degenerate, e.g. at zeros
/// of the nonlinearity) and clamped to zero where a square root is formed.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    data: DMatrix<f64>,
}

impl PsdMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self, PsdError> {
        if data.nrows() != data.ncols() {
            return Err(PsdError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        for i in 0..data.nrows() {
            for j in 0..data.ncols() {
                if !data[(i, j)].is_finite() {
                    return Err(PsdError::NonFinite { i, j });
                }
            }
        }
        let frob = data.norm();
        let sym_tol = SYM_TOL * (1.0 + frob);
        for i in 0..data.nrows() {
            for j in (i + 1)..data.ncols() {
                let delta = (data[(i, j)] - data[(j, i)]).abs();
                if delta > sym_tol {
                    return Err(PsdError::NotSymmetric { i, j, delta });
                }
            }
        }
        // Symmetrize exactly so downstream eigendecompositions are clean.
        let sym = (&data + data.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let op = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
        let tol = EIG_TOL * (1.0 + op);
        if let Some(&min) = eig
            .eigenvalues
            .iter()
            .min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            if min < -tol {
                return Err(PsdError::NotPsd { value: min, tol });
            }
        }
        Ok(Self { data: sym })
    }

    /// 1x1 convenience constructor; rejects negative values.
    pub fn scalar(v: f64) -> Result<Self, PsdError> {
        Self::new(DMatrix::from_element(1, 1, v))
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            data: DMatrix::zeros(m, m),
        }
    }

    pub fn identity(m: usize) -> Self {
        Self {
            data: DMatrix::identity(m, m),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, PsdError> {
        let m = diag.len();
        let mut d = DMatrix::zeros(m, m);
        for (i, &v) in diag.iter().enumerate() {
            d[(i, i)] = v;
        }
        Self::new(d)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Scalar value of a 1x1 matrix.
    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.dim(), 1);
        self.data[(0, 0)]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.norm()
    }

    pub fn operator_norm(&self) -> f64 {
        let eig = SymmetricEigen::new(self.data.clone());
        eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()))
    }

    /// Nuclear norm; for psd matrices this is the trace.
    pub fn nuclear_norm(&self) -> f64 {
        self.data.trace()
    }

    /// A * A, staying in the psd cone.
    pub fn square(&self) -> PsdMatrix {
        PsdMatrix {
            data: &self.data * &self.data,
        }
    }

    /// The unique psd matrix square root, via symmetric eigendecomposition.
    ///
    /// Eigenvalues in `[-EIG_TOL * scale, 0)` are clamped to zero; anything
    /// more negative is an error.
    pub fn sqrt(&self) -> Result<PsdMatrix, PsdError> {
        let eig = SymmetricEigen::new(self.data.clone());
        let op = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
        let tol = EIG_TOL * (1.0 + op);
        let m = self.dim();
        let mut root = DMatrix::zeros(m, m);
        for k in 0..m {
            let l = eig.eigenvalues[k];
            if l < -tol {
                return Err(PsdError::NotPsd { value: l, tol });
            }
            let s = l.max(0.0).sqrt();
            let v = eig.eigenvectors.column(k);
            // root += s * v v^T
            for i in 0..m {
                for j in 0..m {
                    root[(i, j)] += s * v[i] * v[j];
                }
            }
        }
        // Re-symmetrize against rounding.
        let root = (&root + root.transpose()) * 0.5;
        Ok(PsdMatrix { data: root })
    }

    pub fn scale(&self, c: f64) -> Result<PsdMatrix, PsdError> {
        PsdMatrix::new(&self.data * c)
    }
}

/// psd_sqrt as a free function, matching the operation vocabulary used
/// elsewhere in the crate.
pub fn psd_sqrt(a: &PsdMatrix) -> Result<PsdMatrix, PsdError> {
    a.sqrt()
}

/// The Schatten 2-, infinity-, and 1-norms of a general square matrix,
/// computed from its singular values.
pub fn matrix_norms(a: &DMatrix<f64>) -> Result<(f64, f64, f64), PsdError> {
    if a.nrows() != a.ncols() {
        return Err(PsdError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if !a[(i, j)].is_finite() {
                return Err(PsdError::NonFinite { i, j });
            }
        }
    }
    let svd = a.clone().svd(false, false);
    let frob = svd.singular_values.iter().map(|s| s * s).sum::<f64>().sqrt();
    let op = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let nuclear = svd.singular_values.iter().sum::<f64>();
    Ok((frob, op, nuclear))
}

/// Worst observed violation of a matrix inequality over a sample set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ViolationReport {
    pub checks: usize,
    /// max over checks of (lhs - rhs); negative means the inequality held
    /// with slack everywhere.
    pub worst_violation: f64,
    pub worst_lhs: f64,
    pub worst_rhs: f64,
}

impl ViolationReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_violation <= tol
    }
}

/// Matrix-valued reverse triangle inequality over a weighted pair ensemble:
///
/// |(E s1^2)^(1/2) - (E s2^2)^(1/2)|_F <= (E |s1 - s2|_F^2)^(1/2),
///
/// where E averages over the pairs with the given weights (which must form a
/// probability distribution).
pub fn check_reverse_triangle(pairs: &[(PsdMatrix, PsdMatrix, f64)]) -> ViolationReport {
    assert!(!pairs.is_empty(), "empty sample set");
    let m = pairs[0].0.dim();
    let wsum: f64 = pairs.iter().map(|p| p.2).sum();
    debug_assert!((wsum - 1.0).abs() < 1e-9, "weights must sum to 1");
    let mut e1 = DMatrix::zeros(m, m);
    let mut e2 = DMatrix::zeros(m, m);
    let mut ed = 0.0;
    for (s1, s2, w) in pairs {
        e1 += s1.square().matrix() * *w;
        e2 += s2.square().matrix() * *w;
        ed += *w * (s1.matrix() - s2.matrix()).norm_squared();
    }
    let r1 = PsdMatrix::new(e1).and_then(|a| a.sqrt()).expect("E s1^2 psd");
    let r2 = PsdMatrix::new(e2).and_then(|a| a.sqrt()).expect("E s2^2 psd");
    let lhs = (r1.matrix() - r2.matrix()).norm();
    let rhs = ed.sqrt();
    ViolationReport {
        checks: 1,
        worst_violation: lhs - rhs,
        worst_lhs: lhs,
        worst_rhs: rhs,
    }
}

/// Powers-Stormer: |s1 - s2|_F^2 <= |s1^2 - s2^2|_* for psd s1, s2, checked
/// pairwise; reports the worst slack.
pub fn check_powers_stormer(pairs: &[(PsdMatrix, PsdMatrix)]) -> ViolationReport {
    assert!(!pairs.is_empty(), "empty sample set");
    let mut worst = f64::NEG_INFINITY;
    let mut wl = 0.0;
    let mut wr = 0.0;
    for (s1, s2) in pairs {
        let lhs = (s1.matrix() - s2.matrix()).norm_squared();
        let diff = s1.square().matrix() - s2.square().matrix();
        let (_, _, nuclear) = matrix_norms(&diff).expect("finite");
        let v = lhs - nuclear;
        if v > worst {
            worst = v;
            wl = lhs;
            wr = nuclear;
        }
    }
    ViolationReport {
        checks: pairs.len(),
        worst_violation: worst,
        worst_lhs: wl,
        worst_rhs: wr,
    }
}

/// Schatten-Holder: tr[s1 s2^T] <= |s1|_op * |s2|_*, checked pairwise.
pub fn check_holder_schatten(pairs: &[(PsdMatrix, PsdMatrix)]) -> ViolationReport {
    assert!(!pairs.is_empty(), "empty sample set");
    let mut worst = f64::NEG_INFINITY;
    let mut wl = 0.0;
    let mut wr = 0.0;
    for (s1, s2) in pairs {
        let lhs = (s1.matrix() * s2.matrix().transpose()).trace();
        let rhs = s1.operator_norm() * s2.nuclear_norm();
        let v = lhs - rhs;
        if v > worst {
            worst = v;
            wl = lhs;
            wr = rhs;
        }
    }
    ViolationReport {
        checks: pairs.len(),
        worst_violation: worst,
        worst_lhs: wl,
        worst_rhs: wr,
    }
}

/// Draw a random psd matrix A = R^T R with entries of R iid N(0, scale).
pub fn random_psd<R: rand::Rng>(m: usize, scale: f64, rng: &mut R) -> PsdMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let r = DMatrix::from_fn(m, m, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        x * scale
    });
    PsdMatrix::new(r.transpose() * r).expect("R^T R is psd")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn sqrt_identity_and_diagonal() {
        let id = PsdMatrix::identity(3);
        assert_relative_eq!(
            (id.sqrt().unwrap().matrix() - id.matrix()).norm(),
            0.0,
            epsilon = 1e-12
        );
        let d = PsdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let s = d.sqrt().unwrap();
        assert_relative_eq!(s.matrix()[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.matrix()[(1, 1)], 3.0, epsilon = 1e-12);
        assert!(s.matrix()[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn sqrt_two_by_two_against_eigen_oracle() {
        // A = [[2,1],[1,2]] has eigenpairs (1, (1,-1)/sqrt2), (3, (1,1)/sqrt2).
        // Oracle: S = V diag(1, sqrt3) V^T computed by hand.
        let a = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let s = a.sqrt().unwrap();
        let r3 = 3.0f64.sqrt();
        let expect = DMatrix::from_row_slice(
            2,
            2,
            &[
                (1.0 + r3) / 2.0,
                (r3 - 1.0) / 2.0,
                (r3 - 1.0) / 2.0,
                (1.0 + r3) / 2.0,
            ],
        );
        assert!((s.matrix() - &expect).norm() < 1e-12);
        assert!((s.square().matrix() - a.matrix()).norm() < 1e-10 * (1.0 + a.frobenius()));
    }

    #[test]
    fn sqrt_rejects_non_psd_and_non_symmetric() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(matches!(
            PsdMatrix::new(bad),
            Err(PsdError::NotSymmetric { .. })
        ));
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(PsdMatrix::new(neg), Err(PsdError::NotPsd { .. })));
    }

    #[test]
    fn sqrt_clamps_tiny_negative_eigenvalues() {
        let eps = -1e-12;
        let a = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, eps])).unwrap();
        let s = a.sqrt().unwrap();
        assert!(s.matrix()[(1, 1)] >= 0.0);
    }

    #[test]
    fn sqrt_scaling_property() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let a = random_psd(4, 1.0, &mut rng);
        for c in [0.0f64, 1.0, 2.5] {
            let lhs = a.scale(c * c).unwrap().sqrt().unwrap();
            let rhs = a.sqrt().unwrap().scale(c).unwrap();
            assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-9 * (1.0 + a.frobenius()));
        }
    }

    #[test]
    fn norms_known_values() {
        let (f, o, n) = matrix_norms(&DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(f, std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(o, 1.0, epsilon = 1e-12);
        assert_relative_eq!(n, 2.0, epsilon = 1e-12);

        // diag(3,4): singular values {3,4} by hand.
        let d = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let (f, o, n) = matrix_norms(&d).unwrap();
        assert_relative_eq!(f, 5.0, epsilon = 1e-12);
        assert_relative_eq!(o, 4.0, epsilon = 1e-12);
        assert_relative_eq!(n, 7.0, epsilon = 1e-12);

        let z = DMatrix::zeros(3, 3);
        assert_eq!(matrix_norms(&z).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn norm_relations_on_random_matrices() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_psd(3, 1.0, &mut rng);
            let (f, o, n) = matrix_norms(a.matrix()).unwrap();
            assert!(n >= o - 1e-12);
            assert!(f * f <= n * o + 1e-9);
        }
    }

    #[test]
    fn reverse_triangle_identity_and_commuting_pair() {
        let a = PsdMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let rep = check_reverse_triangle(&[(a.clone(), a.clone(), 1.0)]);
        assert!(rep.worst_lhs.abs() < 1e-12 && rep.worst_rhs.abs() < 1e-12);

        // Deterministic commuting pair: both sides sqrt(2).
        let b = PsdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let rep = check_reverse_triangle(&[(a, b, 1.0)]);
        assert_relative_eq!(rep.worst_lhs, std::f64::consts::SQRT_2, epsilon = 1e-10);
        assert_relative_eq!(rep.worst_rhs, std::f64::consts::SQRT_2, epsilon = 1e-10);
        assert!(rep.worst_violation <= 1e-10);
    }

    #[test]
    fn holder_schatten_on_random_pairs() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(29);
        let pairs: Vec<_> = (0..500)
            .map(|_| (random_psd(3, 1.0, &mut rng), random_psd(3, 1.0, &mut rng)))
            .collect();
        let rep = check_holder_schatten(&pairs);
        assert!(rep.worst_violation <= 1e-10, "{rep:?}");
    }

    #[test]
    fn powers_stormer_known_values() {
        let a = PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let rep = check_powers_stormer(&[(a.clone(), a.clone())]);
        assert!(rep.worst_lhs.abs() < 1e-14);

        // diag(1,0) vs diag(0,1): left 2, right 2 by hand.
        let b = PsdMatrix::from_diagonal(&[0.0, 1.0]).unwrap();
        let rep = check_powers_stormer(&[(a, b)]);
        assert_relative_eq!(rep.worst_lhs, 2.0, epsilon = 1e-12);
        assert_relative_eq!(rep.worst_rhs, 2.0, epsilon = 1e-12);
    }
}
