//! Window processes and the measure subspace χ₀ on `[-τ, 0]²`.
//!
//! The window of `X` at time `t` is `η_t(u) = X_{t+u}`, `u ∈ [-τ, 0]`, read
//! through the path extension. Windows live on the base grid: with
//! `τ = m·dt` the window nodes are `u_i = -τ + i·dt`, `i = 0..=m`, node `m`
//! being `u = 0`. Integrals over the window are left-endpoint sums over
//! `i = 0..m-1`; the point `u = 0` is reserved for Dirac components.
//!
//! A [`SquareMeasure`] is stored as the direct sum
//!
//! ```text
//! λ δ₀⊗δ₀  +  a(x)dx⊗δ₀  +  δ₀⊗b(y)dy  +  ρ(x,y)dxdy  +  g(x)δ_y(dx)dy
//! ```
//!
//! and pairs with a square increment `g⊗g` componentwise.
//!
//! For a finite quadratic variation process `[X]`, the χ-quadratic variation
//! evaluated at `μ` is `∫ dμ(x,y) [X]_{t+x}` over the diagonal of the
//! square: the atom contributes `λ[X]_t`, the diagonal density contributes
//! `∫ g(x)[X]_{t+x} dx`, and all other components vanish.

use crate::error::{Error, Result};
use crate::grid_paths::{Grid, SamplePath};
use crate::regcalc::{EpsSchedule, EstimateSeries, Extrapolation};

/// Window geometry on the base grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowGrid {
    steps: usize,
    dx: f64,
}

impl WindowGrid {
    pub fn new(grid: &Grid, tau: f64) -> Result<Self> {
        let steps = grid.width_steps(tau)?;
        Ok(WindowGrid { steps, dx: grid.dt() })
    }

    /// Window of width `T`.
    pub fn full(grid: &Grid) -> Self {
        WindowGrid {
            steps: grid.steps(),
            dx: grid.dt(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn width(&self) -> f64 {
        self.steps as f64 * self.dx
    }

    pub fn node(&self, i: usize) -> f64 {
        if i >= self.steps {
            0.0
        } else {
            -self.width() + i as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }
}

/// Window process of a path.
#[derive(Clone, Debug)]
pub struct WindowPath<'a> {
    base: &'a SamplePath,
    win: WindowGrid,
}

impl<'a> WindowPath<'a> {
    pub fn new(base: &'a SamplePath, tau: f64) -> Result<Self> {
        Ok(WindowPath {
            base,
            win: WindowGrid::new(base.grid(), tau)?,
        })
    }

    pub fn full(base: &'a SamplePath) -> Self {
        WindowPath {
            base,
            win: WindowGrid::full(base.grid()),
        }
    }

    pub fn window_grid(&self) -> &WindowGrid {
        &self.win
    }

    /// `η_t(u)` for any `t` and `u`.
    pub fn eval(&self, t: f64, u: f64) -> f64 {
        self.base.eval_extended(t + u)
    }

    /// Snapshot of `η_{t_j}` at the window nodes.
    pub fn at_node(&self, j: usize) -> Vec<f64> {
        let m = self.win.steps as isize;
        (0..=m).map(|i| self.base.at_signed(j as isize - m + i)).collect()
    }

    /// Snapshot of `η_t` at the window nodes; `t` must be a grid node.
    pub fn at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.at_node(self.base.grid().cells_up_to(t)?))
    }
}

/// Grid-sampled `η_t` for a window of width `τ`.
pub fn window_at(x: &SamplePath, t: f64, tau: f64) -> Result<Vec<f64>> {
    WindowPath::new(x, tau)?.at(t)
}

/// A density on the window, constant or tabulated at the window nodes.
#[derive(Clone, Debug, PartialEq)]
pub enum Density {
    Const(f64),
    Table(Vec<f64>),
}

impl Density {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Density::Const(c) => *c,
            Density::Table(v) => v[i],
        }
    }

    fn check(&self, win: &WindowGrid, what: &str) -> Result<()> {
        match self {
            Density::Const(c) if !c.is_finite() => Err(Error::invalid(format!("{what}: non-finite constant"))),
            Density::Table(v) if v.len() != win.nodes() => Err(Error::invalid(format!(
                "{what}: table has {} values, window has {} nodes",
                v.len(),
                win.nodes()
            ))),
            Density::Table(v) if v.iter().any(|x| !x.is_finite()) => {
                Err(Error::invalid(format!("{what}: non-finite density value")))
            }
            _ => Ok(()),
        }
    }

    /// `∫ a(x) g(x) dx` over the window by left-endpoint sum.
    pub fn integrate(&self, g: &[f64], dx: f64) -> f64 {
        let m = g.len() - 1;
        match self {
            Density::Const(c) => c * g[..m].iter().sum::<f64>() * dx,
            Density::Table(a) => a[..m].iter().zip(&g[..m]).map(|(a, g)| a * g).sum::<f64>() * dx,
        }
    }

    /// `∫ a(x) g(x)² dx` over the window.
    pub fn integrate_square(&self, g: &[f64], dx: f64) -> f64 {
        let m = g.len() - 1;
        match self {
            Density::Const(c) => c * g[..m].iter().map(|v| v * v).sum::<f64>() * dx,
            Density::Table(a) => a[..m].iter().zip(&g[..m]).map(|(a, g)| a * g * g).sum::<f64>() * dx,
        }
    }

    fn scaled(&self, s: f64) -> Density {
        match self {
            Density::Const(c) => Density::Const(s * c),
            Density::Table(v) => Density::Table(v.iter().map(|x| s * x).collect()),
        }
    }

    fn added(&self, other: &Density, nodes: usize) -> Density {
        match (self, other) {
            (Density::Const(a), Density::Const(b)) => Density::Const(a + b),
            _ => Density::Table((0..nodes).map(|i| self.at(i) + other.at(i)).collect()),
        }
    }
}

/// One term `c · φ(x) ψ(y)` of a separable planar density.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableTerm {
    pub coef: f64,
    pub left: Density,
    pub right: Density,
}

#[derive(Clone, Debug, PartialEq)]
pub enum L2Density {
    Separable(Vec<SeparableTerm>),
    /// Row-major `ρ(x_i, y_l)` on the window nodes.
    Dense(Vec<f64>),
}

impl L2Density {
    pub fn constant(c: f64) -> Self {
        L2Density::Separable(vec![SeparableTerm {
            coef: c,
            left: Density::Const(1.0),
            right: Density::Const(1.0),
        }])
    }

    fn pair(&self, g: &[f64], dx: f64) -> f64 {
        match self {
            L2Density::Separable(terms) => terms
                .iter()
                .map(|s| s.coef * s.left.integrate(g, dx) * s.right.integrate(g, dx))
                .sum(),
            L2Density::Dense(rho) => {
                let nodes = g.len();
                let m = nodes - 1;
                let mut acc = 0.0;
                for i in 0..m {
                    let row = &rho[i * nodes..i * nodes + m];
                    let inner: f64 = row.iter().zip(&g[..m]).map(|(r, v)| r * v).sum();
                    acc += g[i] * inner;
                }
                acc * dx * dx
            }
        }
    }

    fn check(&self, win: &WindowGrid) -> Result<()> {
        match self {
            L2Density::Separable(terms) => {
                for s in terms {
                    s.left.check(win, "l2 factor")?;
                    s.right.check(win, "l2 factor")?;
                }
                Ok(())
            }
            L2Density::Dense(v) => {
                if v.len() != win.nodes() * win.nodes() {
                    return Err(Error::invalid("dense l2 density has the wrong size"));
                }
                Ok(())
            }
        }
    }

    fn scaled(&self, s: f64) -> L2Density {
        match self {
            L2Density::Separable(terms) => L2Density::Separable(
                terms
                    .iter()
                    .map(|t| SeparableTerm {
                        coef: s * t.coef,
                        ..t.clone()
                    })
                    .collect(),
            ),
            L2Density::Dense(v) => L2Density::Dense(v.iter().map(|x| s * x).collect()),
        }
    }

    fn to_dense(&self, nodes: usize) -> Vec<f64> {
        match self {
            L2Density::Dense(v) => v.clone(),
            L2Density::Separable(terms) => {
                let mut out = vec![0.0; nodes * nodes];
                for t in terms {
                    for i in 0..nodes {
                        for l in 0..nodes {
                            out[i * nodes + l] += t.coef * t.left.at(i) * t.right.at(l);
                        }
                    }
                }
                out
            }
        }
    }

    fn added(&self, other: &L2Density, nodes: usize) -> L2Density {
        match (self, other) {
            (L2Density::Separable(a), L2Density::Separable(b)) => {
                L2Density::Separable(a.iter().chain(b).cloned().collect())
            }
            _ => {
                let a = self.to_dense(nodes);
                let b = other.to_dense(nodes);
                L2Density::Dense(a.iter().zip(&b).map(|(x, y)| x + y).collect())
            }
        }
    }
}

/// An element of χ₀ on a given window.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMeasure {
    win: WindowGrid,
    pub atom: Option<f64>,
    pub prod_left: Option<Density>,
    pub prod_right: Option<Density>,
    pub l2: Option<L2Density>,
    pub diag: Option<Density>,
}

impl SquareMeasure {
    pub fn zero(win: WindowGrid) -> Self {
        SquareMeasure {
            win,
            atom: None,
            prod_left: None,
            prod_right: None,
            l2: None,
            diag: None,
        }
    }

    /// `λ δ₀⊗δ₀`.
    pub fn dirac(win: WindowGrid, lambda: f64) -> Self {
        SquareMeasure {
            atom: Some(lambda),
            ..Self::zero(win)
        }
    }

    /// `g(x) δ_y(dx) dy`.
    pub fn diagonal(win: WindowGrid, g: Density) -> Self {
        SquareMeasure {
            diag: Some(g),
            ..Self::zero(win)
        }
    }

    pub fn planar(win: WindowGrid, rho: L2Density) -> Self {
        SquareMeasure {
            l2: Some(rho),
            ..Self::zero(win)
        }
    }

    pub fn with_atom(mut self, lambda: f64) -> Self {
        self.atom = Some(lambda);
        self
    }

    pub fn with_prod_left(mut self, a: Density) -> Self {
        self.prod_left = Some(a);
        self
    }

    pub fn with_prod_right(mut self, b: Density) -> Self {
        self.prod_right = Some(b);
        self
    }

    pub fn with_l2(mut self, rho: L2Density) -> Self {
        self.l2 = Some(rho);
        self
    }

    pub fn with_diag(mut self, g: Density) -> Self {
        self.diag = Some(g);
        self
    }

    pub fn window_grid(&self) -> &WindowGrid {
        &self.win
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.atom {
            if !a.is_finite() {
                return Err(Error::invalid("atom weight must be finite"));
            }
        }
        if let Some(d) = &self.prod_left {
            d.check(&self.win, "prod_left")?;
        }
        if let Some(d) = &self.prod_right {
            d.check(&self.win, "prod_right")?;
        }
        if let Some(d) = &self.diag {
            d.check(&self.win, "diag")?;
        }
        if let Some(l) = &self.l2 {
            l.check(&self.win)?;
        }
        Ok(())
    }

    /// `⟨μ, g⊗g⟩` for `g` sampled at the window nodes.
    pub fn pair(&self, g: &[f64]) -> f64 {
        debug_assert_eq!(g.len(), self.win.nodes());
        let dx = self.win.dx;
        let g0 = g[g.len() - 1];
        let mut acc = 0.0;
        if let Some(l) = self.atom {
            acc += l * g0 * g0;
        }
        if let Some(a) = &self.prod_left {
            acc += g0 * a.integrate(g, dx);
        }
        if let Some(b) = &self.prod_right {
            acc += g0 * b.integrate(g, dx);
        }
        if let Some(rho) = &self.l2 {
            acc += rho.pair(g, dx);
        }
        if let Some(d) = &self.diag {
            acc += d.integrate_square(g, dx);
        }
        acc
    }

    pub fn scaled(&self, s: f64) -> SquareMeasure {
        SquareMeasure {
            win: self.win,
            atom: self.atom.map(|a| s * a),
            prod_left: self.prod_left.as_ref().map(|d| d.scaled(s)),
            prod_right: self.prod_right.as_ref().map(|d| d.scaled(s)),
            l2: self.l2.as_ref().map(|d| d.scaled(s)),
            diag: self.diag.as_ref().map(|d| d.scaled(s)),
        }
    }

    /// Componentwise sum.
    pub fn add(&self, other: &SquareMeasure) -> Result<SquareMeasure> {
        if self.win != other.win {
            return Err(Error::GridMismatch("measures on different windows".into()));
        }
        let nodes = self.win.nodes();
        fn merge<T: Clone>(a: &Option<T>, b: &Option<T>, f: impl Fn(&T, &T) -> T) -> Option<T> {
            match (a, b) {
                (Some(x), Some(y)) => Some(f(x, y)),
                (Some(x), None) | (None, Some(x)) => Some(x.clone()),
                (None, None) => None,
            }
        }
        Ok(SquareMeasure {
            win: self.win,
            atom: merge(&self.atom, &other.atom, |a, b| a + b),
            prod_left: merge(&self.prod_left, &other.prod_left, |a, b| a.added(b, nodes)),
            prod_right: merge(&self.prod_right, &other.prod_right, |a, b| a.added(b, nodes)),
            l2: merge(&self.l2, &other.l2, |a, b| a.added(b, nodes)),
            diag: merge(&self.diag, &other.diag, |a, b| a.added(b, nodes)),
        })
    }
}

/// `⟨μ, g⊗g⟩` componentwise.
pub fn pair_measure_with_square_increment(mu: &SquareMeasure, g: &[f64]) -> f64 {
    mu.pair(g)
}

/// ε-increments of `X` on the signed index range `-m..=n`:
/// entry `p` holds `X_{s+k} - X_s` for `s = p - m`, with the path extension.
pub(crate) fn extended_increments(x: &SamplePath, m: usize, k: usize) -> Vec<f64> {
    let n = x.grid().steps() as isize;
    let m = m as isize;
    let k = k as isize;
    (-m..=n).map(|s| x.at_signed(s + k) - x.at_signed(s)).collect()
}

/// `(1/ε) ∫_0^t ⟨μ, (X_{r+ε}(·) - X_r(·))^{⊗2}⟩ dr` with `ε = k·dt`.
pub fn chi_qv_eps(mu: &SquareMeasure, x: &SamplePath, eps: f64, t: f64) -> Result<f64> {
    let grid = x.grid();
    let k = grid.width_steps(eps)?;
    let cells = grid.cells_up_to(t)?;
    if (mu.win.dx - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::GridMismatch("measure window and path grid differ".into()));
    }
    Ok(chi_qv_steps(mu, x, k, cells))
}

pub(crate) fn chi_qv_steps(mu: &SquareMeasure, x: &SamplePath, k: usize, cells: usize) -> f64 {
    let m = mu.win.steps;
    let inc = extended_increments(x, m, k);
    let sums = WindowSums::new(&inc);
    let acc: f64 = (0..cells).map(|j| mu.pair_sliding(&inc, &sums, j)).sum();
    acc / k as f64
}

/// Prefix sums of a sequence and of its squares, so that constant-density
/// window integrals cost O(1) per window position.
pub(crate) struct WindowSums {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl WindowSums {
    pub(crate) fn new(v: &[f64]) -> Self {
        let mut first = Vec::with_capacity(v.len() + 1);
        let mut second = Vec::with_capacity(v.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        first.push(0.0);
        second.push(0.0);
        for x in v {
            a += x;
            b += x * x;
            first.push(a);
            second.push(b);
        }
        WindowSums { first, second }
    }

    /// `Σ_{p ∈ [lo, hi)} v_p`.
    pub(crate) fn sum(&self, lo: usize, hi: usize) -> f64 {
        self.first[hi] - self.first[lo]
    }

    pub(crate) fn sum_sq(&self, lo: usize, hi: usize) -> f64 {
        self.second[hi] - self.second[lo]
    }
}

impl Density {
    fn integrate_sliding(&self, v: &[f64], sums: &WindowSums, j: usize, m: usize, dx: f64) -> f64 {
        match self {
            Density::Const(c) => c * sums.sum(j, j + m) * dx,
            Density::Table(_) => self.integrate(&v[j..=j + m], dx),
        }
    }

    fn integrate_square_sliding(&self, v: &[f64], sums: &WindowSums, j: usize, m: usize, dx: f64) -> f64 {
        match self {
            Density::Const(c) => c * sums.sum_sq(j, j + m) * dx,
            Density::Table(_) => self.integrate_square(&v[j..=j + m], dx),
        }
    }
}

impl SquareMeasure {
    /// Same as `pair(&v[j..=j+m])`, using prefix sums for constant densities.
    pub(crate) fn pair_sliding(&self, v: &[f64], sums: &WindowSums, j: usize) -> f64 {
        let m = self.win.steps;
        let dx = self.win.dx;
        let g0 = v[j + m];
        let mut acc = 0.0;
        if let Some(l) = self.atom {
            acc += l * g0 * g0;
        }
        if let Some(a) = &self.prod_left {
            acc += g0 * a.integrate_sliding(v, sums, j, m, dx);
        }
        if let Some(b) = &self.prod_right {
            acc += g0 * b.integrate_sliding(v, sums, j, m, dx);
        }
        match &self.l2 {
            Some(L2Density::Separable(terms)) => {
                for s in terms {
                    acc += s.coef
                        * s.left.integrate_sliding(v, sums, j, m, dx)
                        * s.right.integrate_sliding(v, sums, j, m, dx);
                }
            }
            Some(dense) => acc += dense.pair(&v[j..=j + m], dx),
            None => {}
        }
        if let Some(d) = &self.diag {
            acc += d.integrate_square_sliding(v, sums, j, m, dx);
        }
        acc
    }
}

/// χ-quadratic variation over a ladder for one path.
pub fn chi_qv_series(mu: &SquareMeasure, x: &SamplePath, schedule: &EpsSchedule, t: f64) -> Result<EstimateSeries> {
    let cells = x.grid().cells_up_to(t)?;
    let values = schedule
        .steps()
        .iter()
        .map(|&k| chi_qv_steps(mu, x, k, cells))
        .collect();
    EstimateSeries::single(t, schedule.eps_values(), values, Extrapolation::default())
}

/// `∫_{D_t} dμ(x,y) [X]_{t+x}` with `[X]` given as a function on `[0, T]`
/// (taken as 0 for negative arguments). The diagonal integral uses the same
/// left-endpoint rule as the estimator.
pub fn chi_qv_formula(mu: &SquareMeasure, qv: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    let q = |s: f64| if s <= 0.0 { 0.0 } else { qv(s) };
    let mut acc = 0.0;
    if let Some(l) = mu.atom {
        acc += l * q(t);
    }
    if let Some(d) = &mu.diag {
        let win = &mu.win;
        acc += (0..win.steps)
            .map(|i| d.at(i) * q(t + win.node(i)))
            .sum::<f64>()
            * win.dx;
    }
    acc
}

/// `(1/ε) ∫_0^t sup_u |X_{r+u+ε} - X_{r+u}|² dr`. Brownian windows have no
/// scalar quadratic variation, so this grows without bound as ε → 0.
pub fn sup_norm_qv_eps(x: &SamplePath, win: &WindowGrid, eps: f64, t: f64) -> Result<f64> {
    let grid = x.grid();
    let k = grid.width_steps(eps)?;
    let cells = grid.cells_up_to(t)?;
    let m = win.steps;
    let inc = extended_increments(x, m, k);
    let acc: f64 = (0..cells)
        .map(|j| inc[j..=j + m].iter().fold(0.0f64, |a, v| a.max(v * v)))
        .sum();
    Ok(acc / k as f64)
}

/// Time-independent scalar functions with closed-form derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarFn {
    Identity,
    Square,
    HalfSquare,
    Sine,
    Exp,
}

impl ScalarFn {
    pub fn value(self, x: f64) -> f64 {
        match self {
            ScalarFn::Identity => x,
            ScalarFn::Square => x * x,
            ScalarFn::HalfSquare => 0.5 * x * x,
            ScalarFn::Sine => x.sin(),
            ScalarFn::Exp => x.exp(),
        }
    }

    pub fn d1(self, x: f64) -> f64 {
        match self {
            ScalarFn::Identity => 1.0,
            ScalarFn::Square => 2.0 * x,
            ScalarFn::HalfSquare => x,
            ScalarFn::Sine => x.cos(),
            ScalarFn::Exp => x.exp(),
        }
    }

    pub fn d2(self, x: f64) -> f64 {
        match self {
            ScalarFn::Identity => 0.0,
            ScalarFn::Square => 2.0,
            ScalarFn::HalfSquare => 1.0,
            ScalarFn::Sine => -x.sin(),
            ScalarFn::Exp => x.exp(),
        }
    }

    /// Polynomial of degree at most two.
    pub fn is_quadratic(self) -> bool {
        matches!(self, ScalarFn::Identity | ScalarFn::Square | ScalarFn::HalfSquare)
    }
}

/// A finite measure on the window: `atom·δ₀ + density(x)dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineMeasure {
    pub atom: f64,
    pub density: Option<Density>,
}

impl LineMeasure {
    /// `⟨ν, g⟩`.
    pub fn pair(&self, g: &[f64], dx: f64) -> f64 {
        let g0 = g[g.len() - 1];
        self.atom * g0 + self.density.as_ref().map_or(0.0, |d| d.integrate(g, dx))
    }

    /// Pairing of the density part alone (the part orthogonal to `δ₀`).
    pub fn pair_perp(&self, g: &[f64], dx: f64) -> f64 {
        self.density.as_ref().map_or(0.0, |d| d.integrate(g, dx))
    }
}

/// Window functionals whose second derivative lies in χ₀.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementaryFunctional {
    /// `F(η) = f(η(0))`.
    PointEval(ScalarFn),
    /// `F(η) = (∫η)²`.
    SquaredMean,
    /// `F(η) = ∫η²`.
    SquaredNorm,
}

impl ElementaryFunctional {
    pub fn value(&self, eta: &[f64], win: &WindowGrid) -> f64 {
        match self {
            ElementaryFunctional::PointEval(f) => f.value(eta[eta.len() - 1]),
            ElementaryFunctional::SquaredMean => Density::Const(1.0).integrate(eta, win.dx).powi(2),
            ElementaryFunctional::SquaredNorm => Density::Const(1.0).integrate_square(eta, win.dx),
        }
    }

    pub fn first(&self, eta: &[f64], win: &WindowGrid) -> LineMeasure {
        match self {
            ElementaryFunctional::PointEval(f) => LineMeasure {
                atom: f.d1(eta[eta.len() - 1]),
                density: None,
            },
            ElementaryFunctional::SquaredMean => LineMeasure {
                atom: 0.0,
                density: Some(Density::Const(2.0 * Density::Const(1.0).integrate(eta, win.dx))),
            },
            ElementaryFunctional::SquaredNorm => LineMeasure {
                atom: 0.0,
                density: Some(Density::Table(eta.iter().map(|v| 2.0 * v).collect())),
            },
        }
    }

    pub fn second(&self, eta: &[f64], win: &WindowGrid) -> SquareMeasure {
        match self {
            ElementaryFunctional::PointEval(f) => SquareMeasure::dirac(*win, f.d2(eta[eta.len() - 1])),
            ElementaryFunctional::SquaredMean => SquareMeasure::planar(*win, L2Density::constant(2.0)),
            ElementaryFunctional::SquaredNorm => SquareMeasure::diagonal(*win, Density::Const(2.0)),
        }
    }

    /// The second derivative does not depend on `η`.
    pub fn constant_hessian(&self) -> bool {
        !matches!(self, ElementaryFunctional::PointEval(f) if !f.is_quadratic())
    }

    pub fn is_quadratic(&self) -> bool {
        match self {
            ElementaryFunctional::PointEval(f) => f.is_quadratic(),
            _ => true,
        }
    }
}

/// `(F(η), DF(η), D²F(η))`.
pub fn functional_derivatives(
    f: &ElementaryFunctional,
    eta: &[f64],
    win: &WindowGrid,
) -> (f64, LineMeasure, SquareMeasure) {
    (f.value(eta, win), f.first(eta, win), f.second(eta, win))
}
