//! Galerkin truncation of a Hilbert-space evolution problem.
//!
//! `A` and `Q` are diagonal in a common orthonormal basis `e_1, …, e_d`:
//! `A e_i = a_i e_i`, `Q e_i = q_i e_i`. The semigroup acts coordinatewise,
//! `e^{tA} x = (e^{a_i t} x_i)_i`, so mild solutions and Gaussian moments have
//! closed forms in coordinates.

pub mod dynamics;
pub mod kolmogorov;
pub mod operators;

pub use dynamics::{
    check_lipschitz, chi_qv_convolution, convolution_ensemble, simulate_convolution, simulate_q_wiener,
    ChiQvConvolution, CoeffFns, Coeffs, ConvolutionPath, NoiseIncrements, Scheme, SigmaMat,
};
pub use kolmogorov::{
    decomposition_check, kolmogorov_mc, ou_oracle, DecompositionLevel, DecompositionReport, KolmoEstimate,
    KolmoProblem, OuQuadratic, Payoff2, QuadraticG,
};
pub use operators::{
    hs_identity_check, integrate_operator_trace, martingale_bracket_q_phi, nuclear_norm, pairing_trace,
    trace_and_bounds, OperatorIntegral, OperatorMat, OperatorRole, TraceBounds,
};

use crate::error::{Error, Result};

/// Eigenvalues of `A` (`a_i <= 0`) and `Q` (`q_i > 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinSpace {
    a: Vec<f64>,
    q: Vec<f64>,
}

impl GalerkinSpace {
    pub fn new(a: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != q.len() {
            return Err(Error::invalid("A and Q spectra must be non-empty and of equal length"));
        }
        if let Some(i) = q.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("q_{} = {} must be positive", i + 1, q[i])));
        }
        if let Some(i) = a.iter().position(|&v| !(v <= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("a_{} = {} must be <= 0", i + 1, a[i])));
        }
        Ok(GalerkinSpace { a, q })
    }

    /// `a_i = -i²π²`, `q_i = i^{-p}`.
    pub fn heat(dim: usize, q_power: f64) -> Result<Self> {
        let a = (1..=dim).map(|i| -((i * i) as f64) * std::f64::consts::PI.powi(2)).collect();
        let q = (1..=dim).map(|i| (i as f64).powf(-q_power)).collect();
        Self::new(a, q)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn trace_q(&self) -> f64 {
        self.q.iter().sum()
    }

    /// `e^{tA}` as its diagonal.
    pub fn semigroup(&self, t: f64) -> Vec<f64> {
        self.a.iter().map(|a| (a * t).exp()).collect()
    }

    pub fn apply_semigroup(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.a.iter().zip(x).map(|(a, v)| (a * t).exp() * v).collect()
    }

    /// Graph-norm weights `(1 + a_i²)^{1/2}` of the domain of `A*`.
    pub fn graph_weights(&self) -> Vec<f64> {
        self.a.iter().map(|a| (1.0 + a * a).sqrt()).collect()
    }
}

/// `∫_0^t e^{λ r} dr`, stable as `λ t → 0`.
pub fn phi1(lambda: f64, t: f64) -> f64 {
    let z = lambda * t;
    if z.abs() < 1e-12 {
        t * (1.0 + 0.5 * z)
    } else {
        t * z.exp_m1() / z
    }
}
