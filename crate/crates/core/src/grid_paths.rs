//! Uniform grids, sample paths and the process zoo.
//!
//! Every estimator in the crate evaluates paths through
//! [`SamplePath::eval_extended`]: a path on `[0, T]` is prolonged by `X_0` to
//! the left and by `X_T` to the right, with linear interpolation between grid
//! nodes.
//!
//! Gaussian processes are sampled with their exact joint law on the grid by a
//! dense Cholesky factor of the covariance of `(X_{t_1}, …, X_{t_n})`
//! (`X_0 = 0`). The factor is computed once per [`PathSampler`] and shared
//! read-only by all paths of an ensemble.
//!
//! Bifractional Brownian motion uses the covariance
//!
//! ```text
//! R(s, t) = 2^{-K} ((s^{2H} + t^{2H})^K - |t - s|^{2HK})
//! ```
//!
//! from Houdré and Villa (2003), "An example of infinite dimensional
//! quasi-helix".

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{cholesky, PackedLower, PackedSym};
use crate::rng::{derive_seed, path_rng};

/// Default cap on grid size for dense covariance factorization.
pub const DEFAULT_CHOLESKY_LIMIT: usize = 1 << 13;

/// Uniform time grid `t_k = k T / n`, `k = 0..=n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 1 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(Grid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Grid node `t_k`; `t_n` is exactly the horizon.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Number of left-endpoint Riemann cells `[t_j, t_{j+1})` lying in `[0, t]`,
    /// with `t` snapped to the grid. Errors if `t` is off-grid by more than a
    /// rounding tolerance or outside `[0, T]`.
    pub fn cells_up_to(&self, t: f64) -> Result<usize> {
        if t < -1e-12 || t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        let x = t / self.dt();
        let k = x.round();
        if (x - k).abs() > 1e-6 {
            return Err(Error::OffGrid { eps: t, dt: self.dt() });
        }
        Ok((k as usize).min(self.steps))
    }

    /// Expresses a width as a number of grid steps.
    pub fn width_steps(&self, width: f64) -> Result<usize> {
        let x = width / self.dt();
        let k = x.round();
        if !(width > 0.0) || (x - k).abs() > 1e-6 || k < 1.0 {
            return Err(Error::OffGrid { eps: width, dt: self.dt() });
        }
        Ok(k as usize)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.steps == other.steps && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon
    }
}

/// A real trajectory sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    grid: Grid,
    values: Vec<f64>,
    label: String,
}

impl SamplePath {
    pub fn new(grid: Grid, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::invalid(format!(
                "path has {} values, grid needs {}",
                values.len(),
                grid.steps() + 1
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite path value at node {k}")));
        }
        Ok(SamplePath {
            grid,
            values,
            label: label.into(),
        })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64, label: impl Into<String>) -> Result<Self> {
        let values = grid.points().into_iter().map(f).collect();
        SamplePath::new(grid, values, label)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        SamplePath {
            grid,
            values: vec![c; grid.steps() + 1],
            label: format!("const({c})"),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.grid.steps()]
    }

    /// Value at node index `k`, with indices past `n` clamped to `X_T`.
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        self.values[k.min(self.grid.steps())]
    }

    /// Value at signed node index, prolonged by `X_0` / `X_T`.
    #[inline]
    pub fn at_signed(&self, k: isize) -> f64 {
        if k <= 0 {
            self.values[0]
        } else {
            self.at(k as usize)
        }
    }

    /// `X_t` for any real `t`: `X_0` for `t <= 0`, `X_T` for `t >= T`, linear
    /// interpolation in between.
    pub fn eval_extended(&self, t: f64) -> f64 {
        let n = self.grid.steps();
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= self.grid.horizon() {
            return self.values[n];
        }
        let x = t / self.grid.dt();
        let k = (x.floor() as usize).min(n - 1);
        let w = x - k as f64;
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    /// Pointwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SamplePath, b: f64) -> Result<SamplePath> {
        check_same_grid(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        SamplePath::new(self.grid, values, format!("{a}*{} + {b}*{}", self.label, other.label))
    }

    pub fn scaled(&self, c: f64) -> SamplePath {
        SamplePath {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            label: format!("{c}*{}", self.label),
        }
    }

    /// Applies `f(t, x)` at every node.
    pub fn map_with_time(&self, f: impl Fn(f64, f64) -> f64) -> Result<SamplePath> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &x)| f(self.grid.time(k), x))
            .collect();
        SamplePath::new(self.grid, values, format!("f({})", self.label))
    }

    /// CSV dump with header `t,x`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", fmt17(self.grid.time(k)), fmt17(*v))?;
        }
        Ok(())
    }
}

pub(crate) fn check_same_grid(a: &SamplePath, b: &SamplePath) -> Result<()> {
    if a.grid.same_as(&b.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "{} steps on [0,{}] vs {} steps on [0,{}]",
            a.grid.steps(),
            a.grid.horizon(),
            b.grid.steps(),
            b.grid.horizon()
        )))
    }
}

/// 17 significant digits, round-trippable.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Named deterministic functions of time.
#[derive(Clone, Debug, PartialEq)]
pub enum DetFn {
    Constant(f64),
    Linear { intercept: f64, slope: f64 },
    Sine { amplitude: f64, frequency: f64 },
    Square,
}

impl DetFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DetFn::Constant(c) => c,
            DetFn::Linear { intercept, slope } => intercept + slope * t,
            DetFn::Sine { amplitude, frequency } => amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            DetFn::Square => t * t,
        }
    }
}

/// Bounded-variation constructions.
#[derive(Clone, Debug, PartialEq)]
pub enum BvKind {
    /// `X_t = slope · t`.
    Ramp { slope: f64 },
    /// `X_t = scale · Σ_{t_j < t} |Z_j| dt`, a random non-decreasing path.
    RandomMonotone { scale: f64 },
}

/// The process zoo.
#[derive(Clone, Debug, PartialEq)]
pub enum ProcessSpec {
    BrownianMotion { sigma: f64 },
    FractionalBM { hurst: f64 },
    Bifractional { hurst: f64, k: f64 },
    /// `base + scale · perturbation`, with a zero-QV perturbation.
    DirichletSum {
        base: Box<ProcessSpec>,
        perturbation: Box<ProcessSpec>,
        scale: f64,
    },
    BoundedVariation(BvKind),
    Deterministic(DetFn),
    /// `factor · inner`.
    Scaled { inner: Box<ProcessSpec>, factor: f64 },
}

/// Declared quadratic variation `[X]_t = rate · t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeclaredQv {
    Linear(f64),
    /// The ε-regularized quadratic variation diverges.
    Infinite,
}

impl ProcessSpec {
    pub fn brownian(sigma: f64) -> Self {
        ProcessSpec::BrownianMotion { sigma }
    }

    pub fn fbm(hurst: f64) -> Self {
        ProcessSpec::FractionalBM { hurst }
    }

    pub fn bifractional(hurst: f64, k: f64) -> Self {
        ProcessSpec::Bifractional { hurst, k }
    }

    /// `W + c·B^{0.75}`, the default Dirichlet example with `[X] = [W]`.
    pub fn dirichlet_default(scale: f64) -> Self {
        ProcessSpec::DirichletSum {
            base: Box::new(ProcessSpec::brownian(1.0)),
            perturbation: Box::new(ProcessSpec::fbm(0.75)),
            scale,
        }
    }

    /// `2^{(K-1)/2} σ B^{H,K}` with `HK = 1/2`, so that `[X]_t = σ² t`.
    pub fn bifractional_unit_qv(k: f64, sigma: f64) -> Self {
        ProcessSpec::Scaled {
            inner: Box::new(ProcessSpec::bifractional(0.5 / k, k)),
            factor: sigma * 2f64.powf((k - 1.0) / 2.0),
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        ProcessSpec::Scaled {
            inner: Box::new(self),
            factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        match self {
            ProcessSpec::BrownianMotion { sigma } => {
                if !(*sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
                }
            }
            ProcessSpec::FractionalBM { hurst } => {
                if !unit(*hurst) {
                    return Err(Error::invalid(format!("Hurst index must lie in (0,1), got {hurst}")));
                }
            }
            ProcessSpec::Bifractional { hurst, k } => {
                if !unit(*hurst) {
                    return Err(Error::invalid(format!("H must lie in (0,1), got {hurst}")));
                }
                if !(*k > 0.0 && *k <= 1.0) {
                    return Err(Error::invalid(format!("K must lie in (0,1], got {k}")));
                }
            }
            ProcessSpec::DirichletSum { base, perturbation, scale } => {
                base.validate()?;
                perturbation.validate()?;
                if !scale.is_finite() {
                    return Err(Error::invalid("Dirichlet scale must be finite"));
                }
                if perturbation.declared_qv() != DeclaredQv::Linear(0.0) {
                    return Err(Error::invalid(format!(
                        "Dirichlet perturbation {perturbation} is not a zero quadratic variation process"
                    )));
                }
            }
            ProcessSpec::BoundedVariation(BvKind::Ramp { slope }) => {
                if !slope.is_finite() {
                    return Err(Error::invalid("ramp slope must be finite"));
                }
            }
            ProcessSpec::BoundedVariation(BvKind::RandomMonotone { scale }) => {
                if !(*scale >= 0.0) {
                    return Err(Error::invalid("monotone scale must be >= 0"));
                }
            }
            ProcessSpec::Deterministic(_) => {}
            ProcessSpec::Scaled { inner, factor } => {
                inner.validate()?;
                if !factor.is_finite() {
                    return Err(Error::invalid("scale factor must be finite"));
                }
            }
        }
        Ok(())
    }

    /// The quadratic variation the process is known to have.
    pub fn declared_qv(&self) -> DeclaredQv {
        use DeclaredQv::*;
        match self {
            ProcessSpec::BrownianMotion { sigma } => Linear(sigma * sigma),
            ProcessSpec::FractionalBM { hurst } => {
                if *hurst > 0.5 {
                    Linear(0.0)
                } else if *hurst == 0.5 {
                    Linear(1.0)
                } else {
                    Infinite
                }
            }
            ProcessSpec::Bifractional { hurst, k } => {
                let hk = hurst * k;
                if hk > 0.5 {
                    Linear(0.0)
                } else if (hk - 0.5).abs() < 1e-12 {
                    Linear(2f64.powf(1.0 - k))
                } else {
                    Infinite
                }
            }
            ProcessSpec::DirichletSum { base, .. } => base.declared_qv(),
            ProcessSpec::BoundedVariation(_) | ProcessSpec::Deterministic(_) => Linear(0.0),
            ProcessSpec::Scaled { inner, factor } => match inner.declared_qv() {
                Linear(r) => Linear(factor * factor * r),
                Infinite => {
                    if *factor == 0.0 {
                        Linear(0.0)
                    } else {
                        Infinite
                    }
                }
            },
        }
    }

    fn covariance(&self) -> Option<Box<dyn Fn(f64, f64) -> f64 + '_>> {
        match *self {
            ProcessSpec::FractionalBM { hurst } => {
                let h2 = 2.0 * hurst;
                Some(Box::new(move |s: f64, t: f64| {
                    0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
                }))
            }
            ProcessSpec::Bifractional { hurst, k } => {
                let h2 = 2.0 * hurst;
                let c = 2f64.powf(-k);
                Some(Box::new(move |s: f64, t: f64| {
                    c * ((s.powf(h2) + t.powf(h2)).powf(k) - (t - s).abs().powf(h2 * k))
                }))
            }
            _ => None,
        }
    }
}

impl fmt::Display for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessSpec::BrownianMotion { sigma } => write!(f, "bm(sigma={sigma})"),
            ProcessSpec::FractionalBM { hurst } => write!(f, "fbm(H={hurst})"),
            ProcessSpec::Bifractional { hurst, k } => write!(f, "bifbm(H={hurst},K={k})"),
            ProcessSpec::DirichletSum { base, perturbation, scale } => {
                write!(f, "{base}+{scale}*{perturbation}")
            }
            ProcessSpec::BoundedVariation(BvKind::Ramp { slope }) => write!(f, "ramp({slope})"),
            ProcessSpec::BoundedVariation(BvKind::RandomMonotone { scale }) => {
                write!(f, "monotone({scale})")
            }
            ProcessSpec::Deterministic(d) => write!(f, "det({d:?})"),
            ProcessSpec::Scaled { inner, factor } => write!(f, "{factor}*{inner}"),
        }
    }
}

#[derive(Debug)]
enum Kernel {
    Brownian { sigma: f64 },
    Gaussian(Arc<PackedLower>),
    Dirichlet {
        base: Box<PathSampler>,
        perturbation: Box<PathSampler>,
        scale: f64,
    },
    Scaled { inner: Box<PathSampler>, factor: f64 },
    Bv(BvKind),
    Det(DetFn),
}

/// A prepared sampler: covariance factors are computed once here and shared
/// by every path drawn from it.
#[derive(Debug)]
pub struct PathSampler {
    spec: ProcessSpec,
    grid: Grid,
    kernel: Kernel,
}

impl PathSampler {
    pub fn new(spec: &ProcessSpec, grid: Grid) -> Result<Self> {
        Self::with_limit(spec, grid, DEFAULT_CHOLESKY_LIMIT)
    }

    /// Like [`PathSampler::new`] with an explicit cap on the number of steps
    /// for which a dense covariance factorization is attempted.
    pub fn with_limit(spec: &ProcessSpec, grid: Grid, cholesky_limit: usize) -> Result<Self> {
        spec.validate()?;
        let kernel = match spec {
            ProcessSpec::BrownianMotion { sigma } => Kernel::Brownian { sigma: *sigma },
            ProcessSpec::FractionalBM { .. } | ProcessSpec::Bifractional { .. } => {
                if grid.steps() > cholesky_limit {
                    return Err(Error::GridTooLarge {
                        steps: grid.steps(),
                        limit: cholesky_limit,
                    });
                }
                let cov = spec.covariance().expect("gaussian kind");
                let n = grid.steps();
                let cov = PackedSym::from_fn(n, |i, j| cov(grid.time(i + 1), grid.time(j + 1)));
                Kernel::Gaussian(Arc::new(cholesky(&cov)?))
            }
            ProcessSpec::DirichletSum { base, perturbation, scale } => Kernel::Dirichlet {
                base: Box::new(PathSampler::with_limit(base, grid, cholesky_limit)?),
                perturbation: Box::new(PathSampler::with_limit(perturbation, grid, cholesky_limit)?),
                scale: *scale,
            },
            ProcessSpec::Scaled { inner, factor } => Kernel::Scaled {
                inner: Box::new(PathSampler::with_limit(inner, grid, cholesky_limit)?),
                factor: *factor,
            },
            ProcessSpec::BoundedVariation(kind) => Kernel::Bv(kind.clone()),
            ProcessSpec::Deterministic(d) => Kernel::Det(d.clone()),
        };
        Ok(PathSampler {
            spec: spec.clone(),
            grid,
            kernel,
        })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Draws the path driven by `seed`.
    pub fn sample(&self, seed: u64) -> SamplePath {
        let values = self.sample_values(seed);
        SamplePath {
            grid: self.grid,
            values,
            label: self.spec.to_string(),
        }
    }

    fn sample_values(&self, seed: u64) -> Vec<f64> {
        let n = self.grid.steps();
        let dt = self.grid.dt();
        match &self.kernel {
            Kernel::Brownian { sigma } => {
                let mut rng = path_rng(seed);
                let sq = dt.sqrt();
                let mut v = Vec::with_capacity(n + 1);
                let mut x = 0.0;
                v.push(0.0);
                for _ in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    x += sq * z;
                    v.push(x);
                }
                // scaling after accumulation keeps BM(σ) = σ·BM(1) exact
                if *sigma != 1.0 {
                    for x in &mut v {
                        *x *= sigma;
                    }
                }
                v
            }
            Kernel::Gaussian(factor) => {
                let mut rng = path_rng(seed);
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let mut v = vec![0.0; n + 1];
                factor.mul_vec(&z, &mut v[1..]);
                v
            }
            Kernel::Dirichlet {
                base,
                perturbation,
                scale,
            } => {
                let b = base.sample_values(derive_seed(seed, 0));
                let p = perturbation.sample_values(derive_seed(seed, 1));
                b.iter().zip(&p).map(|(x, y)| x + scale * y).collect()
            }
            Kernel::Scaled { inner, factor } => {
                let mut v = inner.sample_values(seed);
                for x in &mut v {
                    *x *= factor;
                }
                v
            }
            Kernel::Bv(BvKind::Ramp { slope }) => (0..=n).map(|k| slope * self.grid.time(k)).collect(),
            Kernel::Bv(BvKind::RandomMonotone { scale }) => {
                let mut rng = path_rng(seed);
                let mut v = Vec::with_capacity(n + 1);
                let mut x = 0.0;
                v.push(0.0);
                for _ in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    x += scale * z.abs() * dt;
                    v.push(x);
                }
                v
            }
            Kernel::Det(d) => (0..=n).map(|k| d.eval(self.grid.time(k))).collect(),
        }
    }
}

/// Draws one path of `spec` on `grid`.
pub fn simulate(spec: &ProcessSpec, grid: Grid, seed: u64) -> Result<SamplePath> {
    Ok(PathSampler::new(spec, grid)?.sample(seed))
}

/// A reproducible ensemble: path `i` is `sampler.sample(derive_seed(master_seed, i))`.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    sampler: Arc<PathSampler>,
    count: usize,
    master_seed: u64,
}

impl PathEnsemble {
    pub fn new(spec: &ProcessSpec, grid: Grid, count: usize, master_seed: u64) -> Result<Self> {
        Self::from_sampler(Arc::new(PathSampler::new(spec, grid)?), count, master_seed)
    }

    pub fn from_sampler(sampler: Arc<PathSampler>, count: usize, master_seed: u64) -> Result<Self> {
        if count < 1 {
            return Err(Error::invalid("ensemble needs at least one path"));
        }
        Ok(PathEnsemble {
            sampler,
            count,
            master_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn grid(&self) -> &Grid {
        self.sampler.grid()
    }

    pub fn spec(&self) -> &ProcessSpec {
        self.sampler.spec()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path_seed(&self, i: usize) -> u64 {
        derive_seed(self.master_seed, i as u64)
    }

    pub fn path(&self, i: usize) -> SamplePath {
        self.sampler.sample(self.path_seed(i))
    }

    /// Lazily yields the paths in index order.
    pub fn iter(&self) -> impl Iterator<Item = SamplePath> + '_ {
        (0..self.count).map(move |i| self.path(i))
    }

    /// Applies `f` to every path, in parallel under `Exec::Parallel`; the
    /// result is ordered by path index.
    pub fn map<T, F>(&self, exec: Exec, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &SamplePath) -> T + Sync + Send,
    {
        exec.map(self.count, |i| f(i, &self.path(i)))
    }

    /// CSV dump with header `path_id,t,x`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "path_id,t,x")?;
        let grid = *self.grid();
        for (i, p) in self.iter().enumerate() {
            for (k, v) in p.values().iter().enumerate() {
                writeln!(w, "{i},{},{}", fmt17(grid.time(k)), fmt17(*v))?;
            }
        }
        Ok(())
    }
}

pub fn ensemble(spec: &ProcessSpec, grid: Grid, m: usize, master_seed: u64) -> Result<PathEnsemble> {
    PathEnsemble::new(spec, grid, m, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn grid(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = Grid::new(0.7, 3).unwrap();
        assert_eq!(g.time(3), 0.7);
        let pts = g.points();
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
        assert!(Grid::new(0.0, 4).is_err());
        assert!(Grid::new(1.0, 0).is_err());
        assert_eq!(g.cells_up_to(0.7).unwrap(), 3);
        assert!(g.cells_up_to(0.5).is_err());
    }

    #[test]
    fn extension_convention() {
        let c = SamplePath::constant(grid(8), 2.5);
        assert_eq!(c.eval_extended(-1.0), 2.5);
        let p = SamplePath::new(grid(1), vec![0.0, 1.0], "lin").unwrap();
        assert_eq!(p.eval_extended(0.5), 0.5);
        assert_eq!(p.eval_extended(1.5), 1.0);
        assert_eq!(p.eval_extended(-3.0), 0.0);
        let w = simulate(&ProcessSpec::brownian(1.0), grid(64), 3).unwrap();
        assert_eq!(w.eval_extended(1.0 + 0.5), w.terminal());
    }

    #[test]
    fn extension_is_continuous_at_nodes() {
        let w = simulate(&ProcessSpec::brownian(1.0), grid(32), 9).unwrap();
        let dt = w.grid().dt();
        for k in 1..32 {
            let t = k as f64 * dt;
            let l = w.eval_extended(t - 1e-12);
            let r = w.eval_extended(t + 1e-12);
            assert!((l - r).abs() < 1e-9);
            assert!((w.eval_extended(t) - w.values()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_path() {
        let p = simulate(&ProcessSpec::Deterministic(DetFn::Constant(3.0)), grid(10), 0).unwrap();
        assert!(p.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn brownian_scaling_is_exact() {
        let g = grid(100);
        let a = simulate(&ProcessSpec::brownian(1.0), g, 11).unwrap();
        let b = simulate(&ProcessSpec::brownian(2.3), g, 11).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(2.3 * x, *y);
        }
    }

    #[test]
    fn brownian_increment_variance() {
        // pooled increments from many short paths: sample variance vs dt
        let g = grid(16);
        let e = ensemble(&ProcessSpec::brownian(1.0), g, 10_000 / 16 + 1, 5).unwrap();
        let mut incs = Vec::new();
        for p in e.iter() {
            incs.extend(p.values().windows(2).map(|w| w[1] - w[0]));
        }
        let v = stats::variance(&incs);
        let dt = g.dt();
        // Var of the sample variance for Gaussian data is 2σ⁴/(N-1)
        let se = dt * (2.0 / (incs.len() as f64 - 1.0)).sqrt();
        assert!((v - dt).abs() < 3.0 * se, "var {v} vs dt {dt}");
    }

    #[test]
    fn bifractional_covariance_is_factorizable() {
        let s = PathSampler::new(&ProcessSpec::bifractional(0.625, 0.8), grid(512)).unwrap();
        match &s.kernel {
            Kernel::Gaussian(l) => assert!(l.jitter() <= 1e-10),
            _ => unreachable!(),
        }
    }

    #[test]
    fn fbm_marginal_variance() {
        let g = grid(64);
        let e = ensemble(&ProcessSpec::fbm(0.75), g, 4000, 21).unwrap();
        for &k in &[16usize, 64] {
            let xs: Vec<f64> = e.iter().map(|p| p.values()[k]).collect();
            let v = stats::variance(&xs);
            let target = g.time(k).powf(1.5);
            let se = target * (2.0 / (xs.len() as f64 - 1.0)).sqrt();
            assert!((v - target).abs() < 3.0 * se, "t={} var {v} vs {target}", g.time(k));
        }
    }

    #[test]
    fn ensemble_of_one_matches_simulate() {
        let spec = ProcessSpec::fbm(0.3);
        let g = grid(32);
        let e = ensemble(&spec, g, 1, 99).unwrap();
        let direct = simulate(&spec, g, derive_seed(99, 0)).unwrap();
        assert_eq!(e.path(0), direct);
    }

    #[test]
    fn ensemble_dump_is_deterministic() {
        let spec = ProcessSpec::dirichlet_default(0.5);
        let g = grid(16);
        let dump = || {
            let mut buf = Vec::new();
            ensemble(&spec, g, 3, 4).unwrap().write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(dump(), dump());
    }

    #[test]
    fn ensemble_mean_clt_bound() {
        let e = ensemble(&ProcessSpec::brownian(1.0), grid(50), 100, 77).unwrap();
        let xs: Vec<f64> = e.iter().map(|p| p.terminal()).collect();
        assert!(stats::mean(&xs).abs() < 3.0 / 10.0);
    }

    #[test]
    fn order_independent_generation() {
        let e = ensemble(&ProcessSpec::bifractional(0.625, 0.8), grid(32), 20, 8).unwrap();
        let par = e.map(Exec::Parallel, |_, p| p.values().to_vec());
        let seq: Vec<Vec<f64>> = (0..20).rev().map(|i| e.path(i).values().to_vec()).rev().collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn parameter_validation() {
        assert!(ProcessSpec::fbm(1.0).validate().is_err());
        assert!(ProcessSpec::bifractional(0.5, 0.0).validate().is_err());
        assert!(ProcessSpec::brownian(-1.0).validate().is_err());
        let bad = ProcessSpec::DirichletSum {
            base: Box::new(ProcessSpec::brownian(1.0)),
            perturbation: Box::new(ProcessSpec::brownian(1.0)),
            scale: 1.0,
        };
        assert!(bad.validate().is_err());
        assert!(PathSampler::with_limit(&ProcessSpec::fbm(0.7), grid(64), 32).is_err());
    }

    #[test]
    fn declared_quadratic_variations() {
        match ProcessSpec::bifractional(0.625, 0.8).declared_qv() {
            DeclaredQv::Linear(r) => assert!((r - 2f64.powf(0.2)).abs() < 1e-15),
            _ => panic!(),
        }
        match ProcessSpec::bifractional_unit_qv(0.8, 1.0).declared_qv() {
            DeclaredQv::Linear(r) => assert!((r - 1.0).abs() < 1e-12),
            _ => panic!(),
        }
        assert_eq!(ProcessSpec::fbm(0.3).declared_qv(), DeclaredQv::Infinite);
        assert_eq!(ProcessSpec::dirichlet_default(0.5).declared_qv(), DeclaredQv::Linear(1.0));
    }

    #[test]
    fn csv_round_trips_values() {
        let p = simulate(&ProcessSpec::brownian(1.0), grid(4), 1).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x"));
        for (k, line) in lines.enumerate() {
            let x: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(x, p.values()[k]);
        }
    }
}
