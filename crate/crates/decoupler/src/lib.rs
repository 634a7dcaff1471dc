//! Numerical toolkit for the root decoupling function of a forward-backward
//! SDE, its degenerate parabolic PDE, and the attenuated two-dimensional
//! nonlinear stochastic heat equation whose pointwise statistics it governs.
//!
//! The crate is organized around three routes to the same object and the
//! harnesses that compare them:
//!
//! - [`decoupling`] computes the root decoupling function J by Monte Carlo
//!   fixed-point iteration (with extension, rescaling, and a certificate
//!   checker), and [`decoupling::oracle`] carries the closed-form catalog.
//! - [`pde`] solves the equivalent quasilinear equation dH/dq = 1/2 H H_bb
//!   by positivity-preserving explicit finite differences, so sqrt(H) can be
//!   cross-checked against J.
//! - [`spde`] simulates the attenuated 2D stochastic heat equation on a
//!   periodic grid and measures the pointwise and multipoint laws that the
//!   FBSDE is supposed to reproduce.
//!
//! Supporting modules: [`psd`] (matrix algebra and inequalities), [`scales`]
//! (the exponential time-scale calculus), [`sde`] (Euler-Maruyama ensembles
//! and tree-correlated drivers), [`wasserstein`] (empirical W2), [`io`]
//! (field/ensemble containers), and [`verify`] (the acceptance criteria).
//!
//! See the crate examples for one runnable entry point per capability; the
//! thin `decoupler` binary wires the same library calls to TOML run configs.

pub mod psd;
pub mod scales;
pub mod nonlinearity;
pub mod sde;
pub mod wasserstein;
pub mod cli;
pub mod config;
pub mod decoupling;
pub mod io;
pub mod pde;
pub mod spde;
pub mod verify;

pub use nonlinearity::Nonlinearity;
pub use psd::PsdMatrix;
pub use sde::{solve_theta, DiffusivityField, McConfig, SdeEnsemble};
