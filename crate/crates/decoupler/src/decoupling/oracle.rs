//! Closed-form root decoupling functions.
//!
//! Every scalar family here is a specialization of the quadratic ansatz
//! H(q, b) = F_q [g2 (b (x) b) + g1(b) + g0] with F_q = (Id - q g2)^{-1}:
//! the linear case takes g2 = beta^2; additive-plus-multiplicative noise adds
//! g0 = alpha^2 beta^2; Fisher-Wright flips the sign of g2 (so there is no
//! blow-up and the solution decays); the square-root case keeps only g1 and
//! is constant in q. Scalar families use the absolute-value convention so
//! kinks are allowed.

use crate::nonlinearity::{Nonlinearity, QuadraticFamily};
use crate::psd::PsdMatrix;
use crate::sde::DiffusivityField;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("q = {q} at or beyond the family blow-up time {limit}")]
    BeyondBlowup { q: f64, limit: f64 },
    #[error("negative clock time {0}")]
    NegativeQ(f64),
    #[error("F_q solve failed (Id - q g2 singular at q = {0})")]
    SingularResolvent(f64),
}

/// Closed-form family catalog.
#[derive(Clone)]
pub enum OracleJ {
    /// sigma(b) = beta |b|; J = beta |b| / sqrt(1 - beta^2 q).
    Linear { beta: f64 },
    /// sigma = beta sqrt(alpha^2 + b^2); J = sqrt((alpha^2 + b^2)/(beta^{-2} - q)).
    AddMult { alpha: f64, beta: f64 },
    /// sigma = alpha sqrt(|b(1-b)|); J = sqrt(|b(1-b)|/(alpha^{-2} + q)).
    FisherWright { alpha: f64 },
    /// sigma = |b|^{1/2}; J = |b|^{1/2}, independent of q (Feller diffusion).
    Feller,
    /// General matrix quadratic family.
    Quadratic(QuadraticFamily),
}

impl OracleJ {
    pub fn dim(&self) -> usize {
        match self {
            OracleJ::Quadratic(f) => f.m,
            _ => 1,
        }
    }

    /// Supremum of the validity interval in q (exclusive).
    pub fn validity(&self) -> f64 {
        match self {
            OracleJ::Linear { beta } | OracleJ::AddMult { beta, .. } => 1.0 / (beta * beta),
            OracleJ::FisherWright { .. } | OracleJ::Feller => f64::INFINITY,
            OracleJ::Quadratic(f) => {
                let op = f.g2_operator_norm();
                if op <= 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / op
                }
            }
        }
    }

    /// The nonlinearity this family decouples (J at q = 0).
    pub fn sigma(&self) -> Nonlinearity {
        match self {
            OracleJ::Linear { beta } => Nonlinearity::linear(*beta),
            OracleJ::AddMult { alpha, beta } => Nonlinearity::add_mult(*alpha, *beta),
            OracleJ::FisherWright { alpha } => Nonlinearity::fisher_wright(*alpha),
            OracleJ::Feller => Nonlinearity::feller(),
            OracleJ::Quadratic(f) => Nonlinearity::quadratic_family(f.clone()),
        }
    }

    pub fn eval_scalar(&self, q: f64, b: f64) -> Result<f64, OracleError> {
        if q < 0.0 {
            return Err(OracleError::NegativeQ(q));
        }
        let limit = self.validity();
        if q >= limit {
            return Err(OracleError::BeyondBlowup { q, limit });
        }
        Ok(match self {
            OracleJ::Linear { beta } => beta * b.abs() / (1.0 - beta * beta * q).sqrt(),
            OracleJ::AddMult { alpha, beta } => {
                ((alpha * alpha + b * b) / (1.0 / (beta * beta) - q)).sqrt()
            }
            OracleJ::FisherWright { alpha } => {
                ((b * (1.0 - b)).abs() / (1.0 / (alpha * alpha) + q)).sqrt()
            }
            OracleJ::Feller => b.abs().sqrt(),
            OracleJ::Quadratic(_) => self.eval(q, &[b])?.as_scalar(),
        })
    }

    pub fn eval(&self, q: f64, b: &[f64]) -> Result<PsdMatrix, OracleError> {
        match self {
            OracleJ::Quadratic(f) => {
                if q < 0.0 {
                    return Err(OracleError::NegativeQ(q));
                }
                let limit = self.validity();
                if q >= limit {
                    return Err(OracleError::BeyondBlowup { q, limit });
                }
                let s2 = f.sigma_squared(b);
                let h = f
                    .apply_f_q(q, s2.matrix())
                    .map_err(|_| OracleError::SingularResolvent(q))?;
                if f.m == 1 {
                    Ok(PsdMatrix::scalar(h[(0, 0)].abs().sqrt()).unwrap())
                } else {
                    PsdMatrix::new(h)
                        .and_then(|p| p.sqrt())
                        .map_err(|_| OracleError::SingularResolvent(q))
                }
            }
            _ => Ok(PsdMatrix::scalar(self.eval_scalar(q, b[0])?).unwrap()),
        }
    }

    /// Closed-form diffusivity field on [0, horizon] (scalar families only).
    pub fn as_diffusivity(&self, horizon: f64) -> DiffusivityField {
        assert_eq!(self.dim(), 1, "matrix families are pointwise-only");
        assert!(
            horizon < self.validity(),
            "horizon beyond the family blow-up"
        );
        let this = self.clone();
        let lip = self.lipschitz_at(horizon);
        DiffusivityField::closed_scalar(
            move |q, b| this.eval_scalar(q.min(horizon), b).unwrap_or(0.0),
            horizon,
            lip,
            format!("oracle[{}]", self.label()),
        )
    }

    /// Lipschitz-in-b constant at clock time q (infinite at kinks).
    pub fn lipschitz_at(&self, q: f64) -> f64 {
        match self {
            OracleJ::Linear { beta } => beta / (1.0 - beta * beta * q).sqrt(),
            OracleJ::AddMult { beta, .. } => 1.0 / (1.0 / (beta * beta) - q).sqrt(),
            OracleJ::FisherWright { .. } | OracleJ::Feller => f64::INFINITY,
            OracleJ::Quadratic(_) => f64::INFINITY,
        }
    }

    pub fn label(&self) -> String {
        match self {
            OracleJ::Linear { beta } => format!("linear(beta={beta})"),
            OracleJ::AddMult { alpha, beta } => format!("add_mult(alpha={alpha},beta={beta})"),
            OracleJ::FisherWright { alpha } => format!("fisher_wright(alpha={alpha})"),
            OracleJ::Feller => "feller".into(),
            OracleJ::Quadratic(f) => format!("quadratic(m={})", f.m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_value_from_the_ansatz() {
        let j = OracleJ::Linear { beta: 0.5 };
        assert_relative_eq!(
            j.eval_scalar(1.0, 2.0).unwrap(),
            2.0 / 3.0f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(j.eval_scalar(4.0, 1.0).is_err()); // beyond beta^{-2} = 4
    }

    #[test]
    fn fisher_wright_and_feller_values() {
        let fw = OracleJ::FisherWright { alpha: 1.0 };
        assert_relative_eq!(fw.eval_scalar(0.0, 0.5).unwrap(), 0.5, epsilon = 1e-12);
        let f = OracleJ::Feller;
        for q in [0.0, 1.0, 7.5] {
            assert_relative_eq!(f.eval_scalar(q, 4.0).unwrap(), 2.0);
        }
    }

    #[test]
    fn add_mult_matches_its_quadratic_specialization() {
        let (alpha, beta) = (1.0, 0.8);
        let direct = OracleJ::AddMult { alpha, beta };
        let fam = OracleJ::Quadratic(QuadraticFamily::scalar(
            beta * beta,
            0.0,
            alpha * alpha * beta * beta,
        ));
        for q in [0.0, 0.5, 1.2] {
            for b in [-3.0, 0.0, 0.7, 4.0] {
                assert_relative_eq!(
                    direct.eval_scalar(q, b).unwrap(),
                    fam.eval_scalar(q, b).unwrap(),
                    max_relative = 1e-10
                );
            }
        }
        assert_relative_eq!(fam.validity(), 1.0 / (beta * beta), epsilon = 1e-8);
    }

    #[test]
    fn boundary_value_at_zero_clock_is_sigma() {
        for j in [
            OracleJ::Linear { beta: 0.4 },
            OracleJ::AddMult {
                alpha: 1.0,
                beta: 0.6,
            },
            OracleJ::FisherWright { alpha: 2.0 },
            OracleJ::Feller,
        ] {
            let sigma = j.sigma();
            for b in [-2.0, -0.3, 0.0, 1.0, 3.5] {
                assert_relative_eq!(
                    j.eval_scalar(0.0, b).unwrap(),
                    sigma.eval_scalar(b),
                    epsilon = 1e-12
                );
            }
        }
    }
}
