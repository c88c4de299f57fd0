//! Finite-dimensional operator algebra: traces, trace-class and
//! Hilbert–Schmidt norms, the tensor pairing and operator-valued integrals.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid_paths::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorRole {
    Nuclear,
    HilbertSchmidt,
    Bounded,
    BilinearForm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMat {
    pub mat: DMatrix<f64>,
    pub role: OperatorRole,
}

impl OperatorMat {
    pub fn new(mat: DMatrix<f64>, role: OperatorRole) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::invalid("operator matrix must be square"));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("operator matrix has non-finite entries"));
        }
        Ok(OperatorMat { mat, role })
    }

    pub fn nuclear(mat: DMatrix<f64>) -> Result<Self> {
        Self::new(mat, OperatorRole::Nuclear)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceBounds {
    pub trace: f64,
    pub l1_norm: f64,
    /// `Σ |⟨T e_n, e_n⟩|`.
    pub diag_abs_sum: f64,
    /// `|Tr T| <= ‖T‖₁` and `Σ|⟨Te_n,e_n⟩| <= ‖T‖₁`, up to a rounding slack.
    pub holds: bool,
}

pub fn trace_and_bounds(t: &OperatorMat) -> Result<TraceBounds> {
    if t.role != OperatorRole::Nuclear {
        return Err(Error::invalid("trace bounds need a nuclear operator"));
    }
    let trace = t.mat.trace();
    let l1_norm = nuclear_norm(&t.mat);
    let diag_abs_sum = t.mat.diagonal().iter().map(|v| v.abs()).sum();
    let slack = 1e-12 * l1_norm.max(1.0);
    Ok(TraceBounds {
        trace,
        l1_norm,
        diag_abs_sum,
        holds: trace.abs() <= l1_norm + slack && diag_abs_sum <= l1_norm + slack,
    })
}

/// `|‖T‖²_F - Tr(T Tᵀ)|`.
pub fn hs_identity_check(t: &DMatrix<f64>) -> f64 {
    let frob: f64 = t.iter().map(|v| v * v).sum();
    let tr = (t * t.transpose()).trace();
    (frob - tr).abs()
}

/// `Tr(T_u L_φ)` for `u = Σ x_i ⊗ y_i` stored as `U = Σ x_i y_iᵀ` and a
/// bilinear form `φ(x, y) = xᵀ Φ y`. With `L_φ = Φᵀ` the trace is
/// `Σ_{kl} U_{kl} Φ_{kl}`.
pub fn pairing_trace(u: &DMatrix<f64>, phi: &DMatrix<f64>) -> Result<f64> {
    if u.shape() != phi.shape() {
        return Err(Error::invalid(format!("pairing shapes differ: {:?} vs {:?}", u.shape(), phi.shape())));
    }
    Ok(u.iter().zip(phi.iter()).map(|(a, b)| a * b).sum())
}

/// `(Φ Q^{1/2})(Φ Q^{1/2})ᵀ` for diagonal `Q`.
pub fn martingale_bracket_q_phi(phi: &DMatrix<f64>, q: &[f64]) -> Result<DMatrix<f64>> {
    if phi.ncols() != q.len() {
        return Err(Error::invalid("Phi columns must match the dimension of Q"));
    }
    let mut s = phi.clone();
    for (j, qj) in q.iter().enumerate() {
        let r = qj.sqrt();
        s.column_mut(j).scale_mut(r);
    }
    Ok(&s * s.transpose())
}

/// Result of an operator-valued integral.
#[derive(Clone, Debug)]
pub struct OperatorIntegral {
    pub integral: DMatrix<f64>,
    /// `∫ Tr g(r) dr` by the same quadrature.
    pub trace_integral: f64,
    /// `|Tr(∫ g) - ∫ Tr g|`.
    pub residual: f64,
}

/// Trapezoidal `∫_0^T g(r) dr` over the grid. Every node value must be
/// positive semidefinite (checked by symmetric eigenvalues, with a relative
/// tolerance of `1e-12`).
pub fn integrate_operator_trace(g: &dyn Fn(f64) -> DMatrix<f64>, grid: &Grid) -> Result<OperatorIntegral> {
    let n = grid.steps();
    let dt = grid.dt();
    let mut integral: Option<DMatrix<f64>> = None;
    let mut trace_integral = 0.0;
    for k in 0..=n {
        let m = g(grid.time(k));
        if !m.is_square() {
            return Err(Error::invalid("integrand must be square"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let asym = (&m - &sym).amax();
        let eig = sym.clone().symmetric_eigenvalues();
        let scale = eig.amax().max(1.0);
        if asym > 1e-12 * scale || eig.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::Numerical(format!("integrand is not positive semidefinite at t = {}", grid.time(k))));
        }
        let w = if k == 0 || k == n { 0.5 * dt } else { dt };
        trace_integral += w * m.trace();
        integral = Some(match integral {
            None => m * w,
            Some(acc) => acc + m * w,
        });
    }
    let integral = integral.expect("grid has nodes");
    let residual = (integral.trace() - trace_integral).abs();
    Ok(OperatorIntegral {
        integral,
        trace_integral,
        residual,
    })
}
