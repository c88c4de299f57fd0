//! Stochastic calculus via regularization at desk scale.
//!
//! The crate is organised around the objects the estimators act on:
//!
//! - [`grid_paths`]: uniform grids, sample paths with the constant prolongation
//!   outside `[0, T]`, and exact Gaussian samplers for Brownian, fractional and
//!   bifractional Brownian motion.
//! - [`regcalc`]: ε-regularized covariation, quadratic variation, forward and
//!   improper forward integrals, and deterministic calculus on `[-T, 0]`.
//! - [`chi_window`]: window processes, the measure-type Chi-subspace χ₀ and
//!   χ-quadratic variation.
//! - [`ito_verify`]: residual harnesses for the real and window Itô formulae.
//! - [`replicate`]: robust Clark–Ocone replication of vanilla payoffs.
//! - [`hilbert_kolmo`]: Galerkin-truncated operator algebra, convolution
//!   processes and Monte Carlo Kolmogorov solutions.
//! - [`cli`]: config-driven experiment runner.
//!
//! Monte Carlo loops run through [`Exec`], which dispatches to rayon when the
//! `parallel` feature is enabled and falls back to a sequential loop otherwise.
//! Results are identical either way: every path is a pure function of
//! `(master_seed, index)` and reductions happen in index order.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chi_window;
pub mod cli;
pub mod error;
pub mod exec;
pub mod grid_paths;
pub mod hilbert_kolmo;
pub mod ito_verify;
pub mod linalg;
pub mod quadrature;
pub mod regcalc;
pub mod replicate;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Exec;
