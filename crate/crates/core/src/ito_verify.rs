//! Numerical checks of the Itô formulae at a fixed regularization level.
//!
//! Every term of a formula is computed at the same `ε = k·dt`, so that the
//! residual isolates the Taylor remainder and the boundary averages of the
//! telescoping sums. The `d[X]` integrator is the first difference in time of
//! the ε-covariation curve, `(X_{j+k} - X_j)² / k` on cell `j`.

use std::io::Write;

use crate::chi_window::{extended_increments, ElementaryFunctional, WindowGrid, WindowSums};
use crate::error::Result;
use crate::grid_paths::{check_same_grid, fmt17, SamplePath};
use crate::regcalc::{C01Fn, EpsSchedule};

/// Scalar test functions `F(t, x)` with closed-form partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum C12Fn {
    Identity,
    Square,
    HalfSquare,
    /// `t·x`.
    TimesX,
    Sine,
    /// `a + b·t + c·x`.
    Affine { a: f64, b: f64, c: f64 },
}

impl C12Fn {
    pub fn value(&self, t: f64, x: f64) -> f64 {
        match *self {
            C12Fn::Identity => x,
            C12Fn::Square => x * x,
            C12Fn::HalfSquare => 0.5 * x * x,
            C12Fn::TimesX => t * x,
            C12Fn::Sine => x.sin(),
            C12Fn::Affine { a, b, c } => a + b * t + c * x,
        }
    }

    pub fn dt(&self, _t: f64, x: f64) -> f64 {
        match *self {
            C12Fn::TimesX => x,
            C12Fn::Affine { b, .. } => b,
            _ => 0.0,
        }
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        match *self {
            C12Fn::Identity => 1.0,
            C12Fn::Square => 2.0 * x,
            C12Fn::HalfSquare => x,
            C12Fn::TimesX => t,
            C12Fn::Sine => x.cos(),
            C12Fn::Affine { c, .. } => c,
        }
    }

    pub fn dxx(&self, _t: f64, x: f64) -> f64 {
        match *self {
            C12Fn::Square => 2.0,
            C12Fn::HalfSquare => 1.0,
            C12Fn::Sine => -x.sin(),
            _ => 0.0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            C12Fn::Identity => "x".into(),
            C12Fn::Square => "x^2".into(),
            C12Fn::HalfSquare => "x^2/2".into(),
            C12Fn::TimesX => "t*x".into(),
            C12Fn::Sine => "sin(x)".into(),
            C12Fn::Affine { a, b, c } => format!("{a}+{b}*t+{c}*x"),
        }
    }
}

impl C01Fn for C12Fn {
    fn value(&self, t: f64, x: f64) -> f64 {
        C12Fn::value(self, t, x)
    }

    fn dx(&self, t: f64, x: f64) -> f64 {
        C12Fn::dx(self, t, x)
    }
}

/// One evaluation of an Itô formula. `residual` is defined as
/// `lhs - (time + forward + perp + second)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ItoTerms {
    pub lhs: f64,
    pub time: f64,
    pub forward: f64,
    /// Part of the first-order term orthogonal to `δ₀` (window functionals).
    pub perp: f64,
    /// `½ ∫ ⟨D²F, d[X]⟩`.
    pub second: f64,
    pub residual: f64,
}

impl ItoTerms {
    fn close(lhs: f64, time: f64, forward: f64, perp: f64, second: f64) -> Self {
        ItoTerms {
            lhs,
            time,
            forward,
            perp,
            second,
            residual: lhs - (time + forward + perp + second),
        }
    }

    /// `|lhs - (rhs terms + residual)|`: zero up to rounding.
    pub fn accounting_error(&self) -> f64 {
        (self.lhs - (self.time + self.forward + self.perp + self.second + self.residual)).abs()
    }
}

/// Per-ε terms at time `t` and the sup over `[0, t]` of the residual.
#[derive(Clone, Debug)]
pub struct ItoReport {
    pub label: String,
    pub t: f64,
    pub eps: Vec<f64>,
    pub terms: Vec<ItoTerms>,
    pub sup_residual: Vec<f64>,
}

impl ItoReport {
    /// Sup-residual at the smallest ε.
    pub fn final_residual(&self) -> f64 {
        *self.sup_residual.last().expect("non-empty report")
    }

    /// `true` when `sup_residual <= tol` at the smallest ε.
    pub fn verdict(&self, tol: f64) -> bool {
        self.final_residual() <= tol
    }

    /// Header `eps,t,lhs,time,forward,perp,second,residual,sup_residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,t,lhs,time,forward,perp,second,residual,sup_residual")?;
        for ((e, tm), s) in self.eps.iter().zip(&self.terms).zip(&self.sup_residual) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                fmt17(*e),
                fmt17(self.t),
                fmt17(tm.lhs),
                fmt17(tm.time),
                fmt17(tm.forward),
                fmt17(tm.perp),
                fmt17(tm.second),
                fmt17(tm.residual),
                fmt17(*s)
            )?;
        }
        Ok(())
    }
}

/// Running chain-rule terms for `∫Z d⁻Y`, `Y = F(·, X)`, for every number of
/// cells `J = 0..=n`.
pub fn chain_rule_curve(f: &C12Fn, z: &SamplePath, x: &SamplePath, k: usize) -> Result<Vec<ItoTerms>> {
    check_same_grid(x, z)?;
    let grid = x.grid();
    let n = grid.steps();
    let dt = grid.dt();
    let xv = x.values();
    let zv = z.values();
    let y: Vec<f64> = (0..=n).map(|j| f.value(grid.time(j), xv[j])).collect();
    let inv = 1.0 / k as f64;
    let mut out = Vec::with_capacity(n + 1);
    let (mut lhs, mut time, mut fwd, mut second) = (0.0, 0.0, 0.0, 0.0);
    out.push(ItoTerms::default());
    for j in 0..n {
        let jk = (j + k).min(n);
        let s = grid.time(j);
        let dx = xv[jk] - xv[j];
        lhs += zv[j] * (y[jk] - y[j]) * inv;
        time += zv[j] * f.dt(s, xv[j]) * dt;
        fwd += zv[j] * f.dx(s, xv[j]) * dx * inv;
        second += 0.5 * zv[j] * f.dxx(s, xv[j]) * dx * dx * inv;
        out.push(ItoTerms::close(lhs, time, fwd, 0.0, second));
    }
    Ok(out)
}

/// Residual of `∫Z d⁻Y = ∫Z ∂_tF dr + ∫Z ∂_xF d⁻X + ½∫Z ∂²_xF d[X]` at level ε.
pub fn chain_rule_residual(f: &C12Fn, z: &SamplePath, x: &SamplePath, eps: f64, t: f64) -> Result<ItoTerms> {
    let k = x.grid().width_steps(eps)?;
    let cells = x.grid().cells_up_to(t)?;
    Ok(chain_rule_curve(f, z, x, k)?[cells])
}

/// Chain rule with `Z ≡ 1`.
pub fn ito_residual(f: &C12Fn, x: &SamplePath, eps: f64, t: f64) -> Result<ItoTerms> {
    chain_rule_residual(f, &SamplePath::constant(*x.grid(), 1.0), x, eps, t)
}

/// Chain-rule report over a ladder; `z = None` means `Z ≡ 1`.
pub fn ito_report(
    f: &C12Fn,
    z: Option<&SamplePath>,
    x: &SamplePath,
    schedule: &EpsSchedule,
    t: f64,
) -> Result<ItoReport> {
    let one = SamplePath::constant(*x.grid(), 1.0);
    let z = z.unwrap_or(&one);
    let cells = x.grid().cells_up_to(t)?;
    let mut terms = Vec::with_capacity(schedule.len());
    let mut sup_residual = Vec::with_capacity(schedule.len());
    for &k in schedule.steps() {
        let curve = chain_rule_curve(f, z, x, k)?;
        sup_residual.push(curve[..=cells].iter().fold(0.0f64, |m, c| m.max(c.residual.abs())));
        terms.push(curve[cells]);
    }
    Ok(ItoReport {
        label: f.name(),
        t,
        eps: schedule.eps_values(),
        terms,
        sup_residual,
    })
}

/// `sup_t |F(t, X_t) - F(0, X_0)|` over the grid.
pub fn functional_scale(f: &C12Fn, x: &SamplePath) -> f64 {
    let g = x.grid();
    let f0 = f.value(0.0, x.initial());
    x.values()
        .iter()
        .enumerate()
        .fold(0.0f64, |m, (j, &v)| m.max((f.value(g.time(j), v) - f0).abs()))
}

fn extended_values(x: &SamplePath, m: usize) -> Vec<f64> {
    let n = x.grid().steps() as isize;
    let m = m as isize;
    (-m..=n).map(|s| x.at_signed(s)).collect()
}

/// Running Banach-space Itô terms for a window functional, for every number
/// of cells `J = 0..=n`:
///
/// ```text
/// F(η_J) - F(η_0) = (1/k) Σ_j D^{δ₀}F(η_j)(X_{j+k} - X_j)
///                 + (1/k) Σ_j ∫ D^⊥_x F(η_j) g_j(x) dx
///                 + (1/2k) Σ_j ⟨D²F(η_j), g_j ⊗ g_j⟩  + residual
/// ```
///
/// with `g_j = η_{j+k} - η_j` the window increment. The orthogonal term
/// integrates over the whole window.
pub fn banach_ito_curve(f: &ElementaryFunctional, x: &SamplePath, win: &WindowGrid, k: usize) -> Vec<ItoTerms> {
    let n = x.grid().steps();
    let m = win.steps();
    let dx = win.dx();
    let xe = extended_values(x, m);
    let inc = extended_increments(x, m, k);
    let inv = 1.0 / k as f64;
    let f0 = f.value(&xe[0..=m], win);
    let mut out = Vec::with_capacity(n + 1);
    let (mut fwd, mut perp, mut second) = (0.0, 0.0, 0.0);
    out.push(ItoTerms::default());
    match f {
        ElementaryFunctional::PointEval(g) => {
            for j in 0..n {
                let x0 = xe[j + m];
                let d = inc[j + m];
                fwd += g.d1(x0) * d * inv;
                second += 0.5 * g.d2(x0) * d * d * inv;
                let lhs = g.value(xe[j + 1 + m]) - g.value(xe[m]);
                out.push(ItoTerms::close(lhs, 0.0, fwd, perp, second));
            }
        }
        ElementaryFunctional::SquaredMean => {
            let xs = WindowSums::new(&xe);
            let is = WindowSums::new(&inc);
            for j in 0..n {
                let mean_x = xs.sum(j, j + m) * dx;
                let mean_g = is.sum(j, j + m) * dx;
                perp += 2.0 * mean_x * mean_g * inv;
                second += 0.5 * 2.0 * mean_g * mean_g * inv;
                let lhs = (xs.sum(j + 1, j + 1 + m) * dx).powi(2) - f0;
                out.push(ItoTerms::close(lhs, 0.0, fwd, perp, second));
            }
        }
        ElementaryFunctional::SquaredNorm => {
            let xs = WindowSums::new(&xe);
            let is = WindowSums::new(&inc);
            let prod: Vec<f64> = xe.iter().zip(&inc).map(|(a, b)| a * b).collect();
            let ps = WindowSums::new(&prod);
            for j in 0..n {
                perp += 2.0 * ps.sum(j, j + m) * dx * inv;
                second += 0.5 * 2.0 * is.sum_sq(j, j + m) * dx * inv;
                let lhs = xs.sum_sq(j + 1, j + 1 + m) * dx - f0;
                out.push(ItoTerms::close(lhs, 0.0, fwd, perp, second));
            }
        }
    }
    out
}

/// Same terms as [`banach_ito_curve`] at a single `J`, computed from
/// explicit window snapshots and the functional's derivative objects.
/// Quadratic cost in the window length; used to cross-check the fast path.
pub fn banach_ito_direct(
    f: &ElementaryFunctional,
    x: &SamplePath,
    win: &WindowGrid,
    k: usize,
    cells: usize,
) -> ItoTerms {
    let m = win.steps();
    let dx = win.dx();
    let xe = extended_values(x, m);
    let inc = extended_increments(x, m, k);
    let inv = 1.0 / k as f64;
    let (mut fwd, mut perp, mut second) = (0.0, 0.0, 0.0);
    for j in 0..cells {
        let eta = &xe[j..=j + m];
        let g = &inc[j..=j + m];
        let d1 = f.first(eta, win);
        fwd += d1.atom * g[m] * inv;
        perp += d1.pair_perp(g, dx) * inv;
        second += 0.5 * f.second(eta, win).pair(g) * inv;
    }
    let lhs = f.value(&xe[cells..=cells + m], win) - f.value(&xe[0..=m], win);
    ItoTerms::close(lhs, 0.0, fwd, perp, second)
}

/// Banach-space Itô terms for a window functional at `(ε, t)`.
pub fn banach_ito_residual(
    f: &ElementaryFunctional,
    x: &SamplePath,
    win: &WindowGrid,
    eps: f64,
    t: f64,
) -> Result<ItoTerms> {
    let k = x.grid().width_steps(eps)?;
    let cells = x.grid().cells_up_to(t)?;
    Ok(banach_ito_curve(f, x, win, k)[cells])
}

pub fn banach_ito_report(
    f: &ElementaryFunctional,
    x: &SamplePath,
    win: &WindowGrid,
    schedule: &EpsSchedule,
    t: f64,
) -> Result<ItoReport> {
    let cells = x.grid().cells_up_to(t)?;
    let mut terms = Vec::with_capacity(schedule.len());
    let mut sup_residual = Vec::with_capacity(schedule.len());
    for &k in schedule.steps() {
        let curve = banach_ito_curve(f, x, win, k);
        sup_residual.push(curve[..=cells].iter().fold(0.0f64, |m, c| m.max(c.residual.abs())));
        terms.push(curve[cells]);
    }
    Ok(ItoReport {
        label: format!("{f:?}"),
        t,
        eps: schedule.eps_values(),
        terms,
        sup_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chi_window::ScalarFn;
    use crate::grid_paths::{simulate, Grid, ProcessSpec};

    fn bm(n: usize, seed: u64) -> SamplePath {
        simulate(&ProcessSpec::brownian(1.0), Grid::new(1.0, n).unwrap(), seed).unwrap()
    }

    #[test]
    fn identity_is_exact() {
        let w = bm(512, 1);
        for k in [2usize, 8, 64] {
            let r = ito_residual(&C12Fn::Identity, &w, k as f64 / 512.0, 1.0).unwrap();
            assert_eq!(r.residual, 0.0);
        }
    }

    #[test]
    fn affine_in_time_exact_before_horizon_shift() {
        let w = bm(512, 2);
        let f = C12Fn::Affine { a: 1.0, b: 2.0, c: -3.0 };
        let k = 8;
        let t = 1.0 - k as f64 / 512.0;
        let r = ito_residual(&f, &w, k as f64 / 512.0, t).unwrap();
        assert!(r.residual.abs() < 1e-12);
    }

    #[test]
    fn half_square_gives_ito_integral() {
        let w = bm(4096, 3);
        let r = ito_residual(&C12Fn::HalfSquare, &w, 2.0 / 4096.0, 1.0).unwrap();
        // ∫X d⁻X = lhs - second, compared with (W_1² - 1)/2
        let integral = r.forward;
        assert!((integral - (w.terminal().powi(2) - 1.0) / 2.0).abs() < 0.1);
    }

    #[test]
    fn time_term_matches_quadrature() {
        let w = bm(1024, 4);
        let g = *w.grid();
        let z = SamplePath::from_fn(g, |r| r, "r").unwrap();
        let r = chain_rule_residual(&C12Fn::TimesX, &z, &w, 2.0 / 1024.0, 1.0).unwrap();
        let oracle: f64 = (0..1024).map(|j| g.time(j) * w.values()[j] * g.dt()).sum();
        assert!((r.time - oracle).abs() < 1e-12);
        assert!(r.residual.abs() < 0.05);
    }

    #[test]
    fn accounting_identity() {
        let w = bm(256, 5);
        let rep = ito_report(&C12Fn::Sine, None, &w, &EpsSchedule::default_for(w.grid()).unwrap(), 1.0).unwrap();
        for t in &rep.terms {
            assert!(t.accounting_error() < 1e-12);
        }
    }

    #[test]
    fn fast_window_terms_match_direct() {
        let w = bm(128, 6);
        let win = WindowGrid::new(w.grid(), 0.5).unwrap();
        for f in [
            ElementaryFunctional::PointEval(ScalarFn::Square),
            ElementaryFunctional::PointEval(ScalarFn::Sine),
            ElementaryFunctional::SquaredMean,
            ElementaryFunctional::SquaredNorm,
        ] {
            for k in [2usize, 8] {
                let curve = banach_ito_curve(&f, &w, &win, k);
                for cells in [0usize, 17, 128] {
                    let a = curve[cells];
                    let b = banach_ito_direct(&f, &w, &win, k, cells);
                    for (p, q) in [
                        (a.lhs, b.lhs),
                        (a.forward, b.forward),
                        (a.perp, b.perp),
                        (a.second, b.second),
                    ] {
                        assert!((p - q).abs() < 1e-10 * (1.0 + q.abs()), "{f:?} k={k} J={cells}: {p} vs {q}");
                    }
                }
            }
        }
    }

    #[test]
    fn constant_window_has_zero_residual() {
        let c = SamplePath::constant(Grid::new(1.0, 64).unwrap(), 2.0);
        let win = WindowGrid::full(c.grid());
        let r = banach_ito_residual(&ElementaryFunctional::SquaredNorm, &c, &win, 4.0 / 64.0, 1.0).unwrap();
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.lhs, 0.0);
    }

    #[test]
    fn point_eval_reduces_to_scalar_formula() {
        let w = bm(1024, 7);
        let win = WindowGrid::full(w.grid());
        let a = banach_ito_residual(&ElementaryFunctional::PointEval(ScalarFn::Square), &w, &win, 4.0 / 1024.0, 1.0).unwrap();
        let b = ito_residual(&C12Fn::Square, &w, 4.0 / 1024.0, 1.0).unwrap();
        assert!((a.forward - b.forward).abs() < 1e-12);
        assert!((a.second - b.second).abs() < 1e-12);
        assert_eq!(a.perp, 0.0);
    }
}
