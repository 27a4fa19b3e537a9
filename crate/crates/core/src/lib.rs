//! Smoothed alternating gradient descent ascent (sm-AGDA) for stochastic
//! nonconvex-PL minimax problems.
//!
//! The crate is organised around the [`MinimaxProblem`] oracle trait:
//!
//! - [`ncpl`] and [`dro`] provide the two concrete problems (a synthetic
//!   nonconvex-PL game and distributionally robust logistic regression).
//! - [`optimizer`] runs sm-AGDA with the theory-prescribed parameter policy.
//! - [`bounds`] evaluates the high-probability quantile bound and its
//!   constants, estimates the initialization gap and checks the underlying
//!   concentration inequality by simulation.
//! - [`harness`] runs seeded Monte Carlo ensembles and compares empirical
//!   quantiles with the bound.
//!
//! All arithmetic is `f64`. Every random draw comes from a keyed stream (see
//! [`rng`]) so that runs are reproducible bit for bit.

pub mod bounds;
pub mod dro;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod ncpl;
pub mod optimizer;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};
pub use problem::{MinimaxProblem, NoiseSpec, ProblemConstants};
