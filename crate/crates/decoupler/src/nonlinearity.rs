//! Matrix-valued nonlinearities sigma: R^m -> H_+^m together with their
//! declared Lipschitz constant and quadratic growth pair, plus spot-checks of
//! the class memberships that every horizon certificate relies on.

use crate::psd::{PsdMatrix, PsdError};
use nalgebra::DMatrix;
use std::fmt;
use std::sync::Arc;

/// Closed-form families with known root decoupling functions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Constant,
    Linear,
    AddMult,
    FisherWright,
    Feller,
    Relu,
}

#[derive(Clone)]
enum SigmaKind {
    /// sigma == c (m x m constant matrix).
    Constant(PsdMatrix),
    /// Scalar closed forms and tabulated/custom scalar functions.
    Scalar(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// General matrix-valued evaluator.
    Matrix(Arc<dyn Fn(&[f64]) -> PsdMatrix + Send + Sync>),
}

/// A nonlinearity with its declared regularity metadata.
///
/// `lipschitz` is the lambda of the class Lambda(lambda); `growth = (M, beta)`
/// declares membership in Sigma(M, beta), i.e. |sigma(v)|_F^2 <= M + beta^2 |v|^2.
#[derive(Clone)]
pub struct Nonlinearity {
    m: usize,
    kind: SigmaKind,
    pub lipschitz: f64,
    pub growth: (f64, f64),
    pub family: Option<Family>,
    pub label: String,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("m", &self.m)
            .field("label", &self.label)
            .field("lipschitz", &self.lipschitz)
            .field("growth", &self.growth)
            .finish()
    }
}

impl Nonlinearity {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn eval(&self, b: &[f64]) -> PsdMatrix {
        match &self.kind {
            SigmaKind::Constant(c) => c.clone(),
            SigmaKind::Scalar(f) => {
                debug_assert_eq!(b.len(), 1);
                PsdMatrix::scalar(f(b[0]).max(0.0)).expect("scalar sigma >= 0")
            }
            SigmaKind::Matrix(f) => f(b),
        }
    }

    /// Scalar evaluation shortcut for m = 1.
    pub fn eval_scalar(&self, b: f64) -> f64 {
        match &self.kind {
            SigmaKind::Constant(c) => c.as_scalar(),
            SigmaKind::Scalar(f) => f(b).max(0.0),
            SigmaKind::Matrix(f) => f(&[b]).as_scalar(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, SigmaKind::Constant(_))
    }

    /// sigma == c for a constant psd matrix c.
    pub fn constant(c: PsdMatrix) -> Self {
        let m = c.dim();
        let frob = c.frobenius();
        Nonlinearity {
            m,
            label: format!("constant(|c|_F={frob:.4})"),
            kind: SigmaKind::Constant(c),
            lipschitz: 0.0,
            growth: (frob * frob, f64::MIN_POSITIVE.sqrt()),
            family: Some(Family::Constant),
        }
    }

    /// Scalar constant sigma == c >= 0.
    pub fn constant_scalar(c: f64) -> Self {
        Self::constant(PsdMatrix::scalar(c).expect("c >= 0"))
    }

    /// sigma(b) = beta |b| (scalar linear case).
    pub fn linear(beta: f64) -> Self {
        assert!(beta > 0.0);
        Nonlinearity {
            m: 1,
            kind: SigmaKind::Scalar(Arc::new(move |b: f64| beta * b.abs())),
            lipschitz: beta,
            growth: (0.0, beta),
            family: Some(Family::Linear),
            label: format!("linear(beta={beta})"),
        }
    }

    /// sigma_{alpha,beta}(b) = beta sqrt(alpha^2 + b^2).
    pub fn add_mult(alpha: f64, beta: f64) -> Self {
        assert!(alpha >= 0.0 && beta > 0.0);
        Nonlinearity {
            m: 1,
            kind: SigmaKind::Scalar(Arc::new(move |b: f64| {
                beta * (alpha * alpha + b * b).sqrt()
            })),
            lipschitz: beta,
            growth: (beta * beta * alpha * alpha, beta),
            family: Some(Family::AddMult),
            label: format!("add_mult(alpha={alpha},beta={beta})"),
        }
    }

    /// sigma(b) = alpha sqrt(|b (1 - b)|); non-Lipschitz at the kinks.
    ///
    /// Oracle/PDE-only: not admissible as a Picard input.
    pub fn fisher_wright(alpha: f64) -> Self {
        assert!(alpha > 0.0);
        Nonlinearity {
            m: 1,
            kind: SigmaKind::Scalar(Arc::new(move |b: f64| alpha * (b * (1.0 - b)).abs().sqrt())),
            lipschitz: f64::INFINITY,
            growth: (alpha * alpha * 0.25, alpha),
            family: Some(Family::FisherWright),
            label: format!("fisher_wright(alpha={alpha})"),
        }
    }

    /// sigma(b) = |b|^{1/2}; non-Lipschitz at 0. Oracle/PDE-only.
    pub fn feller() -> Self {
        Nonlinearity {
            m: 1,
            kind: SigmaKind::Scalar(Arc::new(|b: f64| b.abs().sqrt())),
            lipschitz: f64::INFINITY,
            growth: (1.0, 1.0),
            family: Some(Family::Feller),
            label: "feller".into(),
        }
    }

    /// sigma(b) = k max(b, 0).
    pub fn relu(k: f64) -> Self {
        assert!(k > 0.0);
        Nonlinearity {
            m: 1,
            kind: SigmaKind::Scalar(Arc::new(move |b: f64| k * b.max(0.0))),
            lipschitz: k,
            growth: (0.0, k),
            family: Some(Family::Relu),
            label: format!("relu(k={k})"),
        }
    }

    /// Arbitrary scalar sigma with declared constants.
    pub fn scalar_fn(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
        growth: (f64, f64),
        label: impl Into<String>,
    ) -> Self {
        Nonlinearity {
            m: 1,
            kind: SigmaKind::Scalar(Arc::new(f)),
            lipschitz,
            growth,
            family: None,
            label: label.into(),
        }
    }

    /// Piecewise-linear scalar sigma through the given (b, value) table.
    pub fn tabulated(b: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Self {
        assert_eq!(b.len(), values.len());
        assert!(b.len() >= 2);
        assert!(b.windows(2).all(|w| w[1] > w[0]), "b nodes must increase");
        let mut lip: f64 = 0.0;
        for i in 1..b.len() {
            lip = lip.max(((values[i] - values[i - 1]) / (b[i] - b[i - 1])).abs());
        }
        let beta = lip;
        let m_const = values
            .iter()
            .zip(b.iter())
            .map(|(&v, &x)| (v * v - beta * beta * x * x).max(0.0))
            .fold(0.0f64, f64::max);
        let (bv, vv) = (b, values);
        let eval = move |x: f64| -> f64 {
            // Linear extrapolation with the boundary slope outside the table.
            let n = bv.len();
            let i = match bv.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
                Ok(i) => i.min(n - 2),
                Err(0) => 0,
                Err(i) if i >= n => n - 2,
                Err(i) => i - 1,
            };
            let t = (x - bv[i]) / (bv[i + 1] - bv[i]);
            (vv[i] + t * (vv[i + 1] - vv[i])).max(0.0)
        };
        Nonlinearity {
            m: 1,
            kind: SigmaKind::Scalar(Arc::new(eval)),
            lipschitz: lip,
            growth: (m_const, beta),
            family: None,
            label: label.into(),
        }
    }

    /// General matrix-valued sigma with declared constants.
    pub fn matrix_fn(
        m: usize,
        f: impl Fn(&[f64]) -> PsdMatrix + Send + Sync + 'static,
        lipschitz: f64,
        growth: (f64, f64),
        label: impl Into<String>,
    ) -> Self {
        Nonlinearity {
            m,
            kind: SigmaKind::Matrix(Arc::new(f)),
            lipschitz,
            growth,
            family: None,
            label: label.into(),
        }
    }

    /// The general quadratic family sigma(b) = [g2(b (x) b) + g1(b) + g0]^{1/2}.
    pub fn quadratic_family(fam: QuadraticFamily) -> Self {
        let m = fam.m;
        let lip = fam.lipschitz_estimate();
        let growth = fam.growth_estimate();
        Nonlinearity {
            m,
            label: format!("quadratic_family(m={m})"),
            kind: SigmaKind::Matrix(Arc::new(move |b: &[f64]| {
                fam.sigma_squared(b)
                    .sqrt()
                    .expect("quadratic family must be psd on its domain")
            })),
            lipschitz: lip,
            growth,
            family: None,
        }
    }

    /// Spot-check membership in Sigma(M, beta): |sigma(b)|_F^2 <= M + beta^2 |b|^2
    /// on the sampled points. Returns the worst relative excess (<= 0 passes).
    pub fn check_growth_class(&self, samples: &[Vec<f64>]) -> f64 {
        let (m_const, beta) = self.growth;
        let mut worst = f64::NEG_INFINITY;
        for b in samples {
            let bound = m_const + beta * beta * b.iter().map(|x| x * x).sum::<f64>();
            let val = self.eval(b).frobenius().powi(2);
            worst = worst.max((val - bound) / (1.0 + bound));
        }
        worst
    }

    /// Spot-check membership in Lambda(lambda) by finite differences on sample
    /// pairs. Returns the worst ratio Lip_est / lambda (<= 1 + eps passes).
    pub fn check_lipschitz_class(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            let d: f64 = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if d < 1e-14 {
                continue;
            }
            let df = (self.eval(a).matrix() - self.eval(b).matrix()).norm();
            worst = worst.max(df / d / self.lipschitz);
        }
        worst
    }
}

/// sigma^2(b) = g2(b (x) b) + g1(b) + g0 with g2 a linear map on symmetric
/// matrices, g1 a linear map from R^m to symmetric matrices, and g0 psd.
///
/// Operators are supplied as closures; the solved-forward map
/// F_q = (Id - q g2)^{-1} is applied by solving a small linear system on the
/// vectorized symmetric space.
#[derive(Clone)]
pub struct QuadraticFamily {
    pub m: usize,
    pub g2: Arc<dyn Fn(&DMatrix<f64>) -> DMatrix<f64> + Send + Sync>,
    pub g1: Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
    pub g0: PsdMatrix,
}

impl QuadraticFamily {
    /// Numeric Lipschitz estimate for sqrt(sigma^2) by finite differences on
    /// a coarse box; infinite when the square root has kinks.
    fn lipschitz_estimate(&self) -> f64 {
        let m = self.m;
        let mut worst: f64 = 0.0;
        let h = 0.05;
        let probes = probe_box(m, 4.0, 9);
        for b in &probes {
            for ax in 0..m {
                let mut b2 = b.clone();
                b2[ax] += h;
                let d = (self.sigma_squared(b).sqrt().unwrap().matrix()
                    - self.sigma_squared(&b2).sqrt().unwrap().matrix())
                .norm()
                    / h;
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Numeric (M, beta) estimate: beta^2 = sup tr g2(b (x) b)/|b|^2 on the
    /// unit sphere, M soaks up the rest on the probe box.
    fn growth_estimate(&self) -> (f64, f64) {
        let m = self.m;
        let mut beta_sq: f64 = 0.0;
        for b in probe_box(m, 1.0, 17) {
            let n2: f64 = b.iter().map(|x| x * x).sum();
            if n2 < 1e-12 {
                continue;
            }
            let outer = DMatrix::from_fn(m, m, |i, j| b[i] * b[j]);
            beta_sq = beta_sq.max((self.g2)(&outer).trace() / n2);
        }
        let beta_sq = (beta_sq * 1.0001).max(1e-12);
        let mut m_const: f64 = 0.0;
        for b in probe_box(m, 8.0, 17) {
            let n2: f64 = b.iter().map(|x| x * x).sum();
            let v = self.sigma_squared(&b).nuclear_norm();
            m_const = m_const.max(v - beta_sq * n2);
        }
        (m_const.max(0.0), beta_sq.sqrt())
    }

    /// Scalar (m = 1) family: sigma^2(b) = g2 b^2 + g1 b + g0.
    pub fn scalar(g2: f64, g1: f64, g0: f64) -> Self {
        QuadraticFamily {
            m: 1,
            g2: Arc::new(move |x: &DMatrix<f64>| x * g2),
            g1: Arc::new(move |b: &[f64]| DMatrix::from_element(1, 1, g1 * b[0])),
            g0: PsdMatrix::scalar(g0).expect("g0 >= 0"),
        }
    }

    pub fn sigma_squared(&self, b: &[f64]) -> PsdMatrix {
        let m = self.m;
        let outer = DMatrix::from_fn(m, m, |i, j| b[i] * b[j]);
        let raw = (self.g2)(&outer) + (self.g1)(b) + self.g0.matrix();
        // Absolute-value convention in the scalar case (kinks allowed).
        if m == 1 {
            PsdMatrix::scalar(raw[(0, 0)].abs()).unwrap()
        } else {
            PsdMatrix::new(raw).expect("quadratic family must be psd")
        }
    }

    /// Operator norm of g2 on the symmetric space, by power iteration on the
    /// vectorized coordinates. Determines the blow-up time |g2|_op^{-1}.
    pub fn g2_operator_norm(&self) -> f64 {
        let m = self.m;
        let dim = m * (m + 1) / 2;
        let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut norm = 0.0;
        for _ in 0..200 {
            let mat = unvectorize(m, &v);
            let out = (self.g2)(&mat);
            let w = vectorize(&out);
            norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                return 0.0;
            }
            v = w.iter().map(|x| x / norm).collect();
        }
        norm
    }

    /// Apply F_q = (Id - q g2)^{-1} to a symmetric matrix, q inside the
    /// validity interval [0, |g2|_op^{-1}).
    pub fn apply_f_q(&self, q: f64, w: &DMatrix<f64>) -> Result<DMatrix<f64>, PsdError> {
        let m = self.m;
        let dim = m * (m + 1) / 2;
        // Build the matrix of Id - q g2 in vectorized coordinates.
        let mut a = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut e = vec![0.0; dim];
            e[c] = 1.0;
            let col = vectorize(&(self.g2)(&unvectorize(m, &e)));
            for r in 0..dim {
                a[(r, c)] = if r == c { 1.0 } else { 0.0 } - q * col[r];
            }
        }
        let rhs = nalgebra::DVector::from_vec(vectorize(w));
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or(PsdError::NotPsd { value: q, tol: 0.0 })?;
        Ok(unvectorize(m, sol.as_slice()))
    }
}

// Lattice of probe points in [-r, r]^m (k per axis, capped for larger m).
fn probe_box(m: usize, r: f64, k: usize) -> Vec<Vec<f64>> {
    let k = if m > 2 { 5 } else { k };
    let mut points = vec![vec![]];
    for _ in 0..m {
        let mut next = Vec::new();
        for p in &points {
            for i in 0..k {
                let x = -r + 2.0 * r * i as f64 / (k - 1) as f64;
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

// Symmetric matrix <-> upper-triangle coordinates with sqrt(2) off-diagonal
// weights, so the vectorization is an isometry.
fn vectorize(a: &DMatrix<f64>) -> Vec<f64> {
    let m = a.nrows();
    let mut v = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        v.push(a[(i, i)]);
        for j in (i + 1)..m {
            v.push(a[(i, j)] * std::f64::consts::SQRT_2);
        }
    }
    v
}

fn unvectorize(m: usize, v: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        a[(i, i)] = v[k];
        k += 1;
        for j in (i + 1)..m {
            let x = v[k] / std::f64::consts::SQRT_2;
            a[(i, j)] = x;
            a[(j, i)] = x;
            k += 1;
        }
    }
    a
}
