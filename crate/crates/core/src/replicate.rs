//! Replication of vanilla payoffs `h = f(X_T)` through the forward integral.
//!
//! The price function solves the backward heat equation
//! `∂_t v + (σ²/2) ∂²_x v = 0`, `v(T, ·) = f`, so
//! `v(t, x) = E f(x + σ√(T-t) Z)`. Lifted to windows, `u(t, η) = v(t, η(0))`
//! has `Du = ∂_x v δ₀` and no orthogonal part, and the hedge is
//! `ξ_s = ∂_x v(s, X_s)`. For any model whose quadratic variation is `σ²t`,
//! `h = v(0, X_0) + ∫_0^T ξ d⁻X`.

use std::f64::consts::PI;
use std::io::Write;

use libm::erfc;

use crate::chi_window::WindowGrid;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid_paths::{fmt17, Grid, PathEnsemble, ProcessSpec, SamplePath};
use crate::quadrature::GaussHermite;
use crate::regcalc::deterministic::{v2psi_check, HistoryFn, QvTarget};
use crate::regcalc::{forward_curve, improper_forward_integral, EpsSchedule, Extrapolation, ImproperIntegral};
use crate::stats;

/// Terminal payoffs.
#[derive(Clone, Debug, PartialEq)]
pub enum Payoff {
    Linear,
    Square,
    Call { strike: f64 },
    Digital { strike: f64 },
    /// Piecewise-linear interpolation of `(x, f(x))` knots, constant outside.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

impl Payoff {
    pub fn table(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::invalid("payoff table needs at least two (x, f) pairs"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("payoff table abscissae must be increasing"));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("payoff table values must be finite"));
        }
        Ok(Payoff::Table { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Linear => x,
            Payoff::Square => x * x,
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Digital { strike } => {
                if x > *strike {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::Table { xs, ys } => {
                let n = xs.len();
                if x <= xs[0] {
                    return ys[0];
                }
                if x >= xs[n - 1] {
                    return ys[n - 1];
                }
                let i = xs.partition_point(|&a| a <= x) - 1;
                let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
                ys[i] + w * (ys[i + 1] - ys[i])
            }
        }
    }

    /// `f'` where it exists; right derivative at kinks, 0 on flat parts.
    pub fn d1(&self, x: f64) -> f64 {
        match self {
            Payoff::Linear => 1.0,
            Payoff::Square => 2.0 * x,
            Payoff::Call { strike } => {
                if x >= *strike {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::Digital { .. } => 0.0,
            Payoff::Table { xs, ys } => {
                let n = xs.len();
                if x < xs[0] || x >= xs[n - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&a| a <= x) - 1;
                (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            }
        }
    }

    /// `f''` in the classical sense away from kinks.
    pub fn d2(&self, _x: f64) -> f64 {
        match self {
            Payoff::Square => 2.0,
            _ => 0.0,
        }
    }

    /// Checks `|f(x)| <= c (1 + |x|^p)` on a probe grid over `[-r, r]`.
    pub fn growth_ok(&self, c: f64, p: f64, r: f64) -> bool {
        (0..=400).all(|i| {
            let x = -r + 2.0 * r * i as f64 / 400.0;
            self.eval(x).abs() <= c * (1.0 + x.abs().powf(p))
        })
    }

    pub fn name(&self) -> String {
        match self {
            Payoff::Linear => "linear".into(),
            Payoff::Square => "square".into(),
            Payoff::Call { strike } => format!("call:{strike}"),
            Payoff::Digital { strike } => format!("digital:{strike}"),
            Payoff::Table { .. } => "custom-table".into(),
        }
    }
}

/// A solution of the vanilla equation with its space and time derivatives.
pub trait VanillaProvider: Sync {
    fn horizon(&self) -> f64;
    fn sigma(&self) -> f64;
    fn v(&self, t: f64, x: f64) -> f64;
    fn dx(&self, t: f64, x: f64) -> f64;
    fn dxx(&self, t: f64, x: f64) -> f64;

    /// `∂_t v` by central differences (one-sided near the ends).
    fn dt(&self, t: f64, x: f64) -> f64 {
        let big_t = self.horizon();
        let h = 1e-4 * big_t;
        let lo = (t - h).max(0.0);
        let hi = (t + h).min(big_t - 1e-3 * big_t).max(lo + 1e-12);
        (self.v(hi, x) - self.v(lo, x)) / (hi - lo)
    }

    /// `∂_t v + (σ²/2) ∂²_x v`.
    fn heat_residual(&self, t: f64, x: f64) -> f64 {
        self.dt(t, x) + 0.5 * self.sigma() * self.sigma() * self.dxx(t, x)
    }
}

/// `v(t, x) = E f(x + σ√(T-t) Z)` by Gauss–Hermite quadrature.
#[derive(Clone, Debug)]
pub struct VanillaSolution {
    payoff: Payoff,
    sigma: f64,
    horizon: f64,
    rule: GaussHermite,
    check: GaussHermite,
}

impl VanillaSolution {
    pub const DEFAULT_ORDER: usize = 64;

    fn scale(&self, t: f64) -> f64 {
        self.sigma * (self.horizon - t).max(0.0).sqrt()
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    fn moments(&self, rule: &GaussHermite, t: f64, x: f64) -> (f64, f64, f64) {
        let s = self.scale(t);
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (&z, &w) in rule.nodes().iter().zip(rule.weights()) {
            let f = self.payoff.eval(x + s * z);
            m0 += w * f;
            m1 += w * f * z;
            m2 += w * f * (z * z - 1.0);
        }
        (m0, m1, m2)
    }

    /// Compares the rule with one of half the order at probe points; returns
    /// `false` when they disagree beyond `tol` (relative to the payoff
    /// scale), which signals a payoff too rough for the rule.
    pub fn converged(&self, probes: &[(f64, f64)], tol: f64) -> bool {
        probes.iter().all(|&(t, x)| {
            let a = self.moments(&self.rule, t, x).0;
            let b = self.moments(&self.check, t, x).0;
            (a - b).abs() <= tol * (1.0 + a.abs())
        })
    }
}

/// Builds the Gauss–Hermite solution of order `order`.
pub fn solve_vanilla(payoff: Payoff, sigma: f64, horizon: f64, order: usize) -> Result<VanillaSolution> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    Ok(VanillaSolution {
        payoff,
        sigma,
        horizon,
        rule: GaussHermite::new(order)?,
        check: GaussHermite::new((order / 2).max(1))?,
    })
}

impl VanillaProvider for VanillaSolution {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn v(&self, t: f64, x: f64) -> f64 {
        if self.scale(t) == 0.0 {
            return self.payoff.eval(x);
        }
        self.moments(&self.rule, t, x).0
    }

    fn dx(&self, t: f64, x: f64) -> f64 {
        let s = self.scale(t);
        if s == 0.0 {
            return self.payoff.d1(x);
        }
        self.moments(&self.rule, t, x).1 / s
    }

    fn dxx(&self, t: f64, x: f64) -> f64 {
        let s = self.scale(t);
        if s == 0.0 {
            return self.payoff.d2(x);
        }
        self.moments(&self.rule, t, x).2 / (s * s)
    }
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Closed-form solutions (Gaussian convolution in closed form) for the
/// built-in payoffs.
#[derive(Clone, Debug)]
pub struct ClosedFormSolution {
    payoff: Payoff,
    sigma: f64,
    horizon: f64,
}

impl ClosedFormSolution {
    pub fn new(payoff: Payoff, sigma: f64, horizon: f64) -> Result<Self> {
        if matches!(payoff, Payoff::Table { .. }) {
            return Err(Error::invalid("no closed form for tabulated payoffs"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::invalid("sigma must be >= 0"));
        }
        Ok(ClosedFormSolution { payoff, sigma, horizon })
    }

    fn scale(&self, t: f64) -> f64 {
        self.sigma * (self.horizon - t).max(0.0).sqrt()
    }
}

impl VanillaProvider for ClosedFormSolution {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn v(&self, t: f64, x: f64) -> f64 {
        let s = self.scale(t);
        match self.payoff {
            Payoff::Linear => x,
            Payoff::Square => x * x + s * s,
            _ if s == 0.0 => self.payoff.eval(x),
            Payoff::Call { strike } => {
                let d = (x - strike) / s;
                (x - strike) * norm_cdf(d) + s * norm_pdf(d)
            }
            Payoff::Digital { strike } => norm_cdf((x - strike) / s),
            Payoff::Table { .. } => unreachable!(),
        }
    }

    fn dx(&self, t: f64, x: f64) -> f64 {
        let s = self.scale(t);
        match self.payoff {
            Payoff::Linear => 1.0,
            Payoff::Square => 2.0 * x,
            _ if s == 0.0 => self.payoff.d1(x),
            Payoff::Call { strike } => norm_cdf((x - strike) / s),
            Payoff::Digital { strike } => norm_pdf((x - strike) / s) / s,
            Payoff::Table { .. } => unreachable!(),
        }
    }

    fn dxx(&self, t: f64, x: f64) -> f64 {
        let s = self.scale(t);
        match self.payoff {
            Payoff::Linear => 0.0,
            Payoff::Square => 2.0,
            _ if s == 0.0 => self.payoff.d2(x),
            Payoff::Call { strike } => norm_pdf((x - strike) / s) / s,
            Payoff::Digital { strike } => {
                let d = (x - strike) / s;
                -d * norm_pdf(d) / (s * s)
            }
            Payoff::Table { .. } => unreachable!(),
        }
    }

    fn dt(&self, t: f64, x: f64) -> f64 {
        -0.5 * self.sigma * self.sigma * self.dxx(t, x)
    }
}

/// Window lift `u(t, η) = v(t, η(0))`.
pub struct WindowSolution<'a, P: VanillaProvider + ?Sized> {
    v: &'a P,
}

/// Derivatives of the lifted solution at one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftedDerivatives {
    pub u: f64,
    /// Mass of `Du` at `δ₀`; the orthogonal part is identically zero.
    pub d_delta: f64,
    /// Weight of `D²u` on `δ₀⊗δ₀`.
    pub d2_atom: f64,
    /// `∂_t u + (σ²/2) ⟨D²u, 1_{D_t}⟩`.
    pub pde_residual: f64,
}

pub fn lift_to_window<P: VanillaProvider + ?Sized>(v: &P) -> WindowSolution<'_, P> {
    WindowSolution { v }
}

impl<P: VanillaProvider + ?Sized> WindowSolution<'_, P> {
    pub fn at(&self, t: f64, eta: &[f64], _win: &WindowGrid) -> LiftedDerivatives {
        let x = eta[eta.len() - 1];
        let d2 = self.v.dxx(t, x);
        // ⟨δ₀⊗δ₀, 1_{D_t}⟩ = 1: the diagonal contains (0, 0)
        LiftedDerivatives {
            u: self.v.v(t, x),
            d_delta: self.v.dx(t, x),
            d2_atom: d2,
            pde_residual: self.v.dt(t, x) + 0.5 * self.v.sigma().powi(2) * d2,
        }
    }
}

/// `ξ_{t_j} = ∂_x v(t_j, X_{t_j})` for `j < n`; the terminal node repeats
/// `ξ_{t_{n-1}}` (it never enters a left-endpoint sum).
pub fn hedge_process<P: VanillaProvider + ?Sized>(v: &P, x: &SamplePath) -> Result<SamplePath> {
    let g = x.grid();
    let n = g.steps();
    let mut xi: Vec<f64> = (0..n).map(|j| v.dx(g.time(j), x.values()[j])).collect();
    xi.push(xi[n - 1]);
    SamplePath::new(*g, xi, "xi")
}

/// Whether `∂_x v` stays bounded up to the horizon on a probe grid: compares
/// the sup at `T - 2dt` with the sup at `T - 16dt`.
pub fn hedge_is_bounded<P: VanillaProvider + ?Sized>(v: &P, grid: &Grid, center: f64, halfwidth: f64) -> bool {
    let dt = grid.dt();
    let t_big = grid.horizon();
    let sup = |t: f64| {
        (0..=200)
            .map(|i| v.dx(t, center - halfwidth + 2.0 * halfwidth * i as f64 / 200.0).abs())
            .fold(0.0f64, f64::max)
    };
    let near = sup(t_big - 2.0 * dt);
    let far = sup((t_big - 16.0 * dt).max(0.0));
    near <= 1.5 * far.max(1e-300)
}

/// One row of a hedge report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HedgeRow {
    pub h: f64,
    pub g0: f64,
    pub hedge_integral: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct HedgeReport {
    pub model: String,
    pub payoff: String,
    pub eps: f64,
    pub improper: bool,
    pub rows: Vec<HedgeRow>,
    pub mean_abs_residual: f64,
    pub stderr_abs_residual: f64,
    pub mean_residual: f64,
    pub mean_abs_h: f64,
    /// Fraction of gate paths passing the quadratic-variation pre-flight.
    pub qv_gate_pass_rate: f64,
    pub warnings: Vec<String>,
}

impl HedgeReport {
    /// `|residual| / E|h|`.
    pub fn relative_residual(&self) -> f64 {
        self.mean_abs_residual / self.mean_abs_h.max(f64::MIN_POSITIVE)
    }

    /// Rows `model,path_id,h,G0,hedge_integral,residual` without header.
    pub fn write_rows<W: Write>(&self, w: &mut W) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                w,
                "{},{i},{},{},{},{}",
                self.model,
                fmt17(r.h),
                fmt17(r.g0),
                fmt17(r.hedge_integral),
                fmt17(r.residual)
            )?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "model,path_id,h,G0,hedge_integral,residual")?;
        self.write_rows(&mut w)
    }
}

/// Settings for [`replicate_payoff`].
#[derive(Clone, Debug)]
pub struct ReplicationSetup {
    pub grid: Grid,
    pub schedule: EpsSchedule,
    pub paths: usize,
    pub seed: u64,
    /// Paths checked by the quadratic-variation pre-flight.
    pub gate_paths: usize,
    pub gate_tol: f64,
    pub exec: Exec,
}

impl ReplicationSetup {
    pub fn new(grid: Grid, paths: usize, seed: u64) -> Result<Self> {
        Ok(ReplicationSetup {
            schedule: EpsSchedule::default_for(&grid)?,
            grid,
            paths,
            seed,
            gate_paths: 8,
            gate_tol: 0.1,
            exec: Exec::default(),
        })
    }
}

/// Hedges `h = f(X_T)` along every path of `model` with `ξ = ∂_x v` and the
/// forward integral at the smallest ε of the schedule. The integral is
/// proper when `∂_x v` is bounded near `T`, improper otherwise.
pub fn replicate_payoff<P: VanillaProvider + ?Sized>(
    v: &P,
    payoff: &Payoff,
    model: &ProcessSpec,
    setup: &ReplicationSetup,
) -> Result<HedgeReport> {
    let grid = setup.grid;
    if (grid.horizon() - v.horizon()).abs() > 1e-12 * v.horizon() {
        return Err(Error::invalid("solution horizon differs from the grid horizon"));
    }
    let ens = PathEnsemble::new(model, grid, setup.paths, setup.seed)?;
    let sigma = v.sigma();
    let mut warnings = Vec::new();
    match model.declared_qv() {
        crate::grid_paths::DeclaredQv::Linear(r) if (r - sigma * sigma).abs() <= 1e-9 * (1.0 + r) => {}
        q => warnings.push(format!("model {model} declares quadratic variation {q:?}, not sigma^2 t = {}", sigma * sigma)),
    }
    let psi = QvTarget::linear(sigma * sigma)?;
    let gate = setup.gate_paths.min(setup.paths);
    let k = setup.schedule.smallest_steps();
    let passed = (0..gate)
        .map(|i| v2psi_check(&HistoryFn::shifted(&ens.path(i)), &psi, k, setup.gate_tol).map(|r| r.pass))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&p| p)
        .count();
    let qv_gate_pass_rate = if gate > 0 { passed as f64 / gate as f64 } else { 1.0 };
    if qv_gate_pass_rate < 1.0 {
        warnings.push(format!(
            "quadratic-variation pre-flight failed on {} of {gate} paths at tolerance {}",
            gate - passed,
            setup.gate_tol
        ));
    }
    let x0_scale = 5.0 * sigma.max(1e-3) * grid.horizon().sqrt();
    let improper = !hedge_is_bounded(v, &grid, 0.0, x0_scale);
    let rows = ens_rows(v, payoff, &ens, &setup.schedule, improper, setup.exec)?;
    let abs_res: Vec<f64> = rows.iter().map(|r| r.residual.abs()).collect();
    let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let abs_h: Vec<f64> = rows.iter().map(|r| r.h.abs()).collect();
    Ok(HedgeReport {
        model: model.to_string(),
        payoff: payoff.name(),
        eps: setup.schedule.smallest(),
        improper,
        mean_abs_residual: stats::mean(&abs_res),
        stderr_abs_residual: if rows.len() > 1 { stats::std_error(&abs_res) } else { 0.0 },
        mean_residual: stats::mean(&res),
        mean_abs_h: stats::mean(&abs_h),
        rows,
        qv_gate_pass_rate,
        warnings,
    })
}

fn ens_rows<P: VanillaProvider + ?Sized>(
    v: &P,
    payoff: &Payoff,
    ens: &PathEnsemble,
    schedule: &EpsSchedule,
    improper: bool,
    exec: Exec,
) -> Result<Vec<HedgeRow>> {
    let k = schedule.smallest_steps();
    let n = ens.grid().steps();
    exec.try_map(ens.len(), |i| {
        let x = ens.path(i);
        let xi = hedge_process(v, &x)?;
        let hedge_integral = if improper {
            improper_forward_integral(&xi, &x, schedule, &ImproperIntegral::DEFAULT_DELTA_MULTIPLES, Extrapolation::Finest)?
                .value
        } else {
            forward_curve(xi.values(), x.values(), k)[n]
        };
        let h = payoff.eval(x.terminal());
        let g0 = v.v(0.0, x.initial());
        let row = HedgeRow {
            h,
            g0,
            hedge_integral,
            residual: h - g0 - hedge_integral,
        };
        if !row.residual.is_finite() {
            return Err(Error::Numerical(format!("non-finite hedge residual on path {i}")));
        }
        Ok(row)
    })
}

/// Profile of `I(t, η, ε) = ∫_{-t}^0 D^⊥_x u(t, η) (η(x+ε) - η(x))/ε dx`.
#[derive(Clone, Debug)]
pub struct ConditionCProfile {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub sup: f64,
    /// `Some(true)` when the sup exceeds the supplied bound.
    pub exceeds_bound: Option<bool>,
}

/// Evaluates `I(t, η, ε)` over a ladder for a density `D^⊥_x u(t, η)` given
/// as `dperp(x, η(x))`. `eta` is a window snapshot on `win`; values right of
/// 0 are frozen at `η(0)`.
pub fn condition_c_probe(
    dperp: &dyn Fn(f64, f64) -> f64,
    eta: &[f64],
    win: &WindowGrid,
    t: f64,
    eps_multiples: &[usize],
    bound: Option<f64>,
) -> Result<ConditionCProfile> {
    let m = win.steps();
    if eta.len() != m + 1 {
        return Err(Error::invalid("window snapshot has the wrong length"));
    }
    let dx = win.dx();
    let first = ((win.width() - t.min(win.width())) / dx).round() as usize;
    let mut eps = Vec::new();
    let mut values = Vec::new();
    for &k in eps_multiples {
        if k == 0 {
            return Err(Error::invalid("eps must be positive"));
        }
        let acc: f64 = (first..m)
            .map(|i| dperp(win.node(i), eta[i]) * (eta[(i + k).min(m)] - eta[i]))
            .sum();
        eps.push(k as f64 * dx);
        values.push(acc / k as f64);
    }
    let sup = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(ConditionCProfile {
        eps,
        values,
        sup,
        exceeds_bound: bound.map(|b| sup > b),
    })
}
