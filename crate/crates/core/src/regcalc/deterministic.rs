//! Deterministic regularization calculus for functions on `[-T, 0]`.
//!
//! A [`HistoryFn`] stores `g` at the nodes `x_k = -T + k·dt`. Functions are
//! prolonged by `g(0)` to the right of the interval, matching the path
//! convention. The deterministic covariation is accumulated from the left end:
//!
//! ```text
//! [g]^ε(x) = ∫_{-T}^{x} (g(r+ε) - g(r))² dr / ε
//! ```
//!
//! and compared against a target `ψ(x + T)`.

use crate::error::{Error, Result};
use crate::grid_paths::{Grid, SamplePath};
use crate::regcalc::{cov_sum, covariation_curve};

/// A function on `[-T, 0]` sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryFn {
    grid: Grid,
    values: Vec<f64>,
}

impl HistoryFn {
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let t = grid.horizon();
        let values = (0..=grid.steps()).map(|k| f(grid.time(k) - t)).collect();
        HistoryFn { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::invalid("history function has the wrong number of nodes"));
        }
        Ok(HistoryFn { grid, values })
    }

    /// `g(x) = X_{x+T}`: the whole path seen as a history ending at 0.
    pub fn shifted(path: &SamplePath) -> Self {
        HistoryFn {
            grid: *path.grid(),
            values: path.values().to_vec(),
        }
    }

    /// `g(x) = X_{-x}`: the path run backwards onto `[-T, 0]`.
    pub fn reversed(path: &SamplePath) -> Self {
        let mut values = path.values().to_vec();
        values.reverse();
        HistoryFn {
            grid: *path.grid(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Node abscissa `x_k`.
    pub fn abscissa(&self, k: usize) -> f64 {
        self.grid.time(k) - self.grid.horizon()
    }

    fn node(&self, x: f64) -> Result<usize> {
        self.grid.cells_up_to(x + self.grid.horizon())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &HistoryFn) -> Result<HistoryFn> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("history functions on different grids".into()));
        }
        Ok(HistoryFn {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

/// Target quadratic variation `ψ` on `[0, T]` with `ψ(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum QvTarget {
    /// `ψ(s) = rate · s`.
    Linear(f64),
    /// Values at the grid nodes of `[0, T]`.
    Table { grid: Grid, values: Vec<f64> },
}

impl QvTarget {
    pub fn table(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::invalid("psi table has the wrong number of nodes"));
        }
        if values[0] != 0.0 {
            return Err(Error::invalid("psi(0) must be 0"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("psi must be nondecreasing"));
        }
        Ok(QvTarget::Table { grid, values })
    }

    pub fn linear(rate: f64) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(Error::invalid("psi rate must be >= 0"));
        }
        Ok(QvTarget::Linear(rate))
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            QvTarget::Linear(r) => r * s,
            QvTarget::Table { grid, values } => {
                SamplePath::new(*grid, values.clone(), "psi").map(|p| p.eval_extended(s)).unwrap_or(f64::NAN)
            }
        }
    }
}

/// 2-regularization variation of `g`.
#[derive(Clone, Debug)]
pub struct TwoVar {
    /// `(ε, ∫_{-T}^0 (g_J(s+ε) - g_J(s))² ds / ε)` for each admissible ε.
    pub energies: Vec<(f64, f64)>,
    /// Square root of the largest energy.
    pub seminorm: f64,
    pub sup_norm: f64,
    /// `sup |g| + seminorm`.
    pub v2_norm: f64,
}

/// Discrete sup over `ε = k·dt` for `k` in `multiples` with `0 < ε < 1`.
pub fn two_var_norm(g: &HistoryFn, multiples: &[usize]) -> Result<TwoVar> {
    let dt = g.grid.dt();
    let n = g.grid.steps();
    let energies: Vec<(f64, f64)> = multiples
        .iter()
        .filter(|&&k| k >= 1 && k <= n && (k as f64 * dt) < 1.0)
        .map(|&k| (k as f64 * dt, cov_sum(&g.values, &g.values, k, n)))
        .collect();
    if energies.is_empty() {
        return Err(Error::invalid("no admissible eps in (0, 1) for this grid"));
    }
    let sup = energies.iter().fold(0.0f64, |m, e| m.max(e.1));
    let seminorm = sup.sqrt();
    let sup_norm = g.sup_norm();
    Ok(TwoVar {
        energies,
        seminorm,
        sup_norm,
        v2_norm: sup_norm + seminorm,
    })
}

#[derive(Clone, Debug)]
pub struct V2PsiReport {
    pub pass: bool,
    /// `[g]^ε(x_k) - ψ(x_k + T)` at every node.
    pub deviation: Vec<f64>,
    pub sup_deviation: f64,
    /// `tol` scaled by `ψ(T)` when that is positive.
    pub threshold: f64,
}

/// Tests `[g] ≈ ψ` on the grid at `ε = eps_steps·dt`. The tolerance is
/// relative to `ψ(T)` when `ψ(T) > 0` and absolute otherwise.
pub fn v2psi_check(g: &HistoryFn, psi: &QvTarget, eps_steps: usize, tol: f64) -> Result<V2PsiReport> {
    if eps_steps < 1 || eps_steps > g.grid.steps() {
        return Err(Error::invalid("eps outside the grid"));
    }
    let curve = covariation_curve(&g.values, &g.values, eps_steps);
    let deviation: Vec<f64> = curve
        .iter()
        .enumerate()
        .map(|(k, c)| c - psi.eval(g.grid.time(k)))
        .collect();
    let sup_deviation = deviation.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let scale = psi.eval(g.grid.horizon());
    let threshold = if scale > 0.0 { tol * scale } else { tol };
    Ok(V2PsiReport {
        pass: sup_deviation <= threshold,
        deviation,
        sup_deviation,
        threshold,
    })
}

/// `∫_{]a,b]} g(s) (f_J(s+ε) - f_J(s)) / ε ds` for a density `g`, with
/// `f_J = f(b)` right of `b`. Left-endpoint Riemann sum over the nodes of
/// `[a, b)`.
pub fn det_forward_integral(g: &HistoryFn, f: &HistoryFn, a: f64, b: f64, eps_steps: usize) -> Result<f64> {
    if !g.grid.same_as(&f.grid) {
        return Err(Error::GridMismatch("density and integrator on different grids".into()));
    }
    let ia = g.node(a)?;
    let ib = g.node(b)?;
    if ia >= ib {
        return Err(Error::invalid(format!("need a < b, got a = {a}, b = {b}")));
    }
    if eps_steps < 1 {
        return Err(Error::invalid("eps must be at least one step"));
    }
    let fv = &f.values;
    let acc: f64 = (ia..ib)
        .map(|j| g.values[j] * (fv[(j + eps_steps).min(ib)] - fv[j]))
        .sum();
    Ok(acc / eps_steps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::{simulate, ProcessSpec};

    fn grid(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    #[test]
    fn constant_has_zero_variation() {
        let g = HistoryFn::from_fn(grid(64), |_| 2.0);
        let r = two_var_norm(&g, &[2, 4, 8]).unwrap();
        assert_eq!(r.seminorm, 0.0);
        assert_eq!(r.v2_norm, 2.0);
        assert!(v2psi_check(&g, &QvTarget::Linear(0.0), 2, 0.0).unwrap().pass);
    }

    #[test]
    fn identity_energy_closed_form() {
        let n = 512;
        let g = HistoryFn::from_fn(grid(n), |x| x);
        let dt = 1.0 / n as f64;
        let ladder = [2usize, 8, 32, 128];
        let r = two_var_norm(&g, &ladder).unwrap();
        for (&k, &(e, v)) in ladder.iter().zip(&r.energies) {
            let discrete = dt * dt / k as f64 * ((n - k) as f64 * (k * k) as f64 + (1..=k).map(|i| (i * i) as f64).sum::<f64>());
            assert!((v - discrete).abs() < 1e-13);
            assert!((v - (e - 2.0 * e * e / 3.0)).abs() < 2.0 * dt * e);
        }
    }

    #[test]
    fn brownian_history_matches_linear_target() {
        let w = simulate(&ProcessSpec::brownian(1.0), grid(4096), 17).unwrap();
        let g = HistoryFn::reversed(&w);
        assert!(v2psi_check(&g, &QvTarget::Linear(1.0), 2, 0.1).unwrap().pass);
        let r = two_var_norm(&g, &[2, 4, 8, 16]).unwrap();
        assert!(r.seminorm > 0.5 && r.seminorm < 1.5);
    }

    #[test]
    fn smooth_fbm_history_fails_linear_target() {
        let p = simulate(&ProcessSpec::fbm(0.75), grid(1024), 3).unwrap();
        let g = HistoryFn::shifted(&p);
        assert!(!v2psi_check(&g, &QvTarget::Linear(1.0), 2, 0.1).unwrap().pass);
    }

    #[test]
    fn forward_integral_of_unit_density() {
        let gr = grid(2048);
        let one = HistoryFn::from_fn(gr, |_| 1.0);
        let f = HistoryFn::from_fn(gr, |x| x.abs());
        let v = det_forward_integral(&one, &f, -1.0, -0.25, 2).unwrap();
        assert!((v - (0.25 - 1.0)).abs() < 2e-3);
        let c = HistoryFn::from_fn(gr, |_| 5.0);
        assert_eq!(det_forward_integral(&f, &c, -1.0, 0.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn forward_integral_by_parts() {
        let gr = grid(4096);
        let g = HistoryFn::from_fn(gr, |x| 1.0 + x * x);
        let f = HistoryFn::from_fn(gr, |x| (3.0 * x).sin());
        let (a, b) = (-0.75, 0.0);
        let v = det_forward_integral(&g, &f, a, b, 2).unwrap();
        // g(b)f(b) - ∫ f g' by midpoint quadrature
        let m = 20_000;
        let h = (b - a) / m as f64;
        let integral: f64 = (0..m)
            .map(|i| {
                let x = a + (i as f64 + 0.5) * h;
                (3.0 * x).sin() * 2.0 * x * h
            })
            .sum();
        let oracle = (1.0 + b * b) * (3.0 * b).sin() - integral - (1.0 + a * a) * (3.0 * a).sin();
        assert!((v - oracle).abs() < 5e-3, "{v} vs {oracle}");
    }

    #[test]
    fn psi_table_validation() {
        let gr = grid(4);
        assert!(QvTarget::table(gr, vec![0.0, 0.1, 0.05, 0.2, 0.3]).is_err());
        let t = QvTarget::table(gr, vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!((t.eval(0.6) - 0.6).abs() < 1e-12);
    }
}
