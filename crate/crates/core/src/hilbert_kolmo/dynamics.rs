//! Q-Wiener noise, convolution-type processes and their χ-quadratic
//! variation against rank-one forms.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::operators::{martingale_bracket_q_phi, pairing_trace};
use super::{phi1, GalerkinSpace};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid_paths::{Grid, SamplePath};
use crate::regcalc::{cov_sum, EpsSchedule, EstimateSeries, Extrapolation};
use crate::rng::{derive_seed, path_rng, PathRng};

/// Diffusion coefficient as a map `U₀ → H` in coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaMat {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl SigmaMat {
    pub fn identity(dim: usize) -> Self {
        SigmaMat::Diagonal(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            SigmaMat::Diagonal(s) => s.len(),
            SigmaMat::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SigmaMat::Diagonal(s) => DMatrix::from_diagonal(&DVector::from_row_slice(s)),
            SigmaMat::Dense(m) => m.clone(),
        }
    }

    pub fn apply(&self, w: &[f64], out: &mut [f64]) {
        match self {
            SigmaMat::Diagonal(s) => {
                for i in 0..s.len() {
                    out[i] = s[i] * w[i];
                }
            }
            SigmaMat::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..m.ncols()).map(|j| m[(i, j)] * w[j]).sum();
                }
            }
        }
    }

    /// `‖σ Q^{1/2}‖_{𝓛₂}`.
    pub fn hs_norm_q(&self, q: &[f64]) -> f64 {
        match self {
            SigmaMat::Diagonal(s) => s.iter().zip(q).map(|(s, q)| s * s * q).sum::<f64>().sqrt(),
            SigmaMat::Dense(m) => {
                let mut acc = 0.0;
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        acc += m[(i, j)] * m[(i, j)] * q[j];
                    }
                }
                acc.sqrt()
            }
        }
    }

    /// `σ Q σᵀ`.
    pub fn covariance(&self, q: &[f64]) -> DMatrix<f64> {
        martingale_bracket_q_phi(&self.to_dense(), q).expect("dimensions checked by caller")
    }

    fn is_zero(&self) -> bool {
        match self {
            SigmaMat::Diagonal(s) => s.iter().all(|v| *v == 0.0),
            SigmaMat::Dense(m) => m.iter().all(|v| *v == 0.0),
        }
    }
}

/// Drift and diffusion coefficients `b(t, x)`, `σ(t, x)` with a declared
/// Lipschitz constant.
pub trait CoeffFns: Sync {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64]) -> Cow<'_, SigmaMat>;
    fn lipschitz(&self) -> f64;
    fn dim(&self) -> usize;

    /// True when neither coefficient depends on `x`.
    fn state_independent(&self) -> bool {
        false
    }
}

/// `b(t, x) = b₀ + B x`, `σ(t, x) = σ̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coeffs {
    pub b0: Vec<f64>,
    pub b1: Option<DMatrix<f64>>,
    pub sigma: SigmaMat,
}

impl Coeffs {
    pub fn constant(b0: Vec<f64>, sigma: SigmaMat) -> Result<Self> {
        Self::affine(b0, None, sigma)
    }

    pub fn affine(b0: Vec<f64>, b1: Option<DMatrix<f64>>, sigma: SigmaMat) -> Result<Self> {
        let d = b0.len();
        if sigma.dim() != d || b1.as_ref().is_some_and(|m| m.shape() != (d, d)) {
            return Err(Error::invalid("coefficient dimensions disagree"));
        }
        if let SigmaMat::Dense(m) = &sigma {
            if !m.is_square() {
                return Err(Error::invalid("sigma must be square"));
            }
        }
        Ok(Coeffs { b0, b1, sigma })
    }

    pub fn zero(dim: usize) -> Self {
        Coeffs {
            b0: vec![0.0; dim],
            b1: None,
            sigma: SigmaMat::Diagonal(vec![0.0; dim]),
        }
    }
}

impl CoeffFns for Coeffs {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b0);
        if let Some(m) = &self.b1 {
            for (i, o) in out.iter_mut().enumerate() {
                *o += (0..x.len()).map(|j| m[(i, j)] * x[j]).sum::<f64>();
            }
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64]) -> Cow<'_, SigmaMat> {
        Cow::Borrowed(&self.sigma)
    }

    fn lipschitz(&self) -> f64 {
        self.b1.as_ref().map_or(0.0, |m| m.clone().svd(false, false).singular_values.max())
    }

    fn dim(&self) -> usize {
        self.b0.len()
    }

    fn state_independent(&self) -> bool {
        self.b1.is_none()
    }
}

/// Samples `(t, η)` pairs and checks the Lipschitz and linear-growth bounds
/// on `b` and on `σ Q^{1/2}` (Hilbert–Schmidt norm) with constant `c`.
/// Returns the largest observed ratio to the bound; a value above 1 is a
/// violation.
pub fn check_lipschitz(
    coeffs: &dyn CoeffFns,
    space: &GalerkinSpace,
    horizon: f64,
    c: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let d = space.dim();
    if coeffs.dim() != d {
        return Err(Error::invalid("coefficient dimension differs from the space"));
    }
    let mut rng = path_rng(seed);
    let mut worst: f64 = 0.0;
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..samples {
        let t = rng.random::<f64>() * horizon;
        let x: Vec<f64> = (0..d).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..d).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        coeffs.drift(t, &x, &mut bx);
        coeffs.drift(t, &y, &mut by);
        let dist = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        let db = norm(&bx.iter().zip(&by).map(|(a, b)| a - b).collect::<Vec<_>>());
        let sx = coeffs.diffusion(t, &x).into_owned().to_dense();
        let sy = coeffs.diffusion(t, &y).into_owned().to_dense();
        let ds = SigmaMat::Dense(sx.clone() - sy).hs_norm_q(space.q());
        let grow = 1.0 + norm(&x);
        let ratios = [
            db / (c * dist),
            ds / (c * dist),
            norm(&bx) / (c * grow),
            SigmaMat::Dense(sx).hs_norm_q(space.q()) / (c * grow),
        ];
        for r in ratios {
            if r.is_nan() {
                return Err(Error::Numerical("coefficient evaluation produced NaN".into()));
            }
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Time-stepping scheme for `dX = (AX + b)dt + σ dW`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    /// `X_{k+1} = e^{dt·A}(X_k + b dt + σ ΔW_k)`.
    ExponentialEuler,
    /// `X_{k+1} = e^{dt·A}X_k + φ₁(dt·A) b + ∫ e^{(t_{k+1}-r)A} σ dW_r` with
    /// coefficients frozen at `t_k` and the stochastic convolution sampled
    /// jointly with `ΔW_k`. Exact in law for constant coefficients.
    #[default]
    ExponentialIntegrator,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::ExponentialEuler => "exp-euler",
            Scheme::ExponentialIntegrator => "exp-integrator",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp-euler" | "exponential-euler" => Ok(Scheme::ExponentialEuler),
            "exp-integrator" | "exponential-integrator" => Ok(Scheme::ExponentialIntegrator),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Q-Wiener increments, row `k` holding `ΔW_k ∈ ℝ^d`.
#[derive(Clone, Debug)]
pub struct NoiseIncrements {
    grid: Grid,
    dim: usize,
    data: Vec<f64>,
}

impl NoiseIncrements {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Empirical covariance of the rows, divided by `dt`.
    pub fn empirical_covariance(&self) -> DMatrix<f64> {
        let n = self.grid.steps();
        let d = self.dim;
        let mut c = DMatrix::zeros(d, d);
        for k in 0..n {
            let w = self.step(k);
            for i in 0..d {
                for j in 0..d {
                    c[(i, j)] += w[i] * w[j];
                }
            }
        }
        c / (n as f64 * self.grid.dt())
    }
}

/// `ΔW_{k,i} ~ N(0, q_i dt)`, independent.
pub fn simulate_q_wiener(space: &GalerkinSpace, grid: &Grid, seed: u64) -> NoiseIncrements {
    let d = space.dim();
    let sd: Vec<f64> = space.q().iter().map(|q| (q * grid.dt()).sqrt()).collect();
    let mut rng = path_rng(seed);
    let mut data = Vec::with_capacity(grid.steps() * d);
    for _ in 0..grid.steps() {
        for s in &sd {
            data.push(s * rng.sample::<f64, _>(StandardNormal));
        }
    }
    NoiseIncrements {
        grid: *grid,
        dim: d,
        data,
    }
}

/// Per-step sampler of `(ζ_k, ΔW_k)` where `ζ_k = ∫ e^{(t_{k+1}-r)A} σ dW_r`
/// over one step. Also used for the plain `σ ΔW_k` of exponential Euler.
pub(crate) struct StepNoise {
    dt: f64,
    sq: Vec<f64>,
    /// Diagonal case: 2×2 factors per coordinate `(l11, l21, l22)`.
    diag: Vec<(f64, f64, f64)>,
    /// Dense case: square root of the joint covariance of
    /// `(∫e^{(dt-r)a_i}dβ_r)_i` and `β_dt` for a unit Brownian `β`.
    dense: Option<DMatrix<f64>>,
}

impl StepNoise {
    pub(crate) fn new(space: &GalerkinSpace, dt: f64, dense: bool) -> Result<Self> {
        let a = space.a();
        let sq = space.q().iter().map(|q| q.sqrt()).collect();
        let diag = a
            .iter()
            .map(|&ai| {
                let p2 = phi1(2.0 * ai, dt);
                let p1 = phi1(ai, dt);
                let l11 = p2.sqrt();
                let l21 = p1 / l11;
                let l22 = (dt - l21 * l21).max(0.0).sqrt();
                (l11, l21, l22)
            })
            .collect();
        let dense = if dense {
            let d = a.len();
            let k = DMatrix::from_fn(d + 1, d + 1, |i, j| match (i == d, j == d) {
                (false, false) => phi1(a[i] + a[j], dt),
                (false, true) => phi1(a[i], dt),
                (true, false) => phi1(a[j], dt),
                (true, true) => dt,
            });
            let eig = k.symmetric_eigen();
            let scale = eig.eigenvalues.amax();
            if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
                return Err(Error::Numerical("step covariance is not positive semidefinite".into()));
            }
            let root = DVector::from_iterator(d + 1, eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
            Some(&eig.eigenvectors * DMatrix::from_diagonal(&root))
        } else {
            None
        };
        Ok(StepNoise { dt, sq, diag, dense })
    }

    /// Fills `zeta` with the convolution noise and `dw` with the Q-Wiener
    /// increment.
    pub(crate) fn sample(&self, sigma: &SigmaMat, rng: &mut PathRng, zeta: &mut [f64], dw: &mut [f64], scratch: &mut [f64]) {
        let d = self.sq.len();
        match (sigma, &self.dense) {
            (SigmaMat::Diagonal(s), _) => {
                for i in 0..d {
                    let (l11, l21, l22) = self.diag[i];
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    zeta[i] = s[i] * self.sq[i] * l11 * z1;
                    dw[i] = self.sq[i] * (l21 * z1 + l22 * z2);
                }
            }
            (SigmaMat::Dense(m), Some(root)) => {
                zeta.fill(0.0);
                let z = &mut scratch[..d + 1];
                for j in 0..d {
                    for v in z.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    // u = root · z is the unit-source joint draw for source j.
                    let mut w_j = 0.0;
                    for c in 0..=d {
                        w_j += root[(d, c)] * z[c];
                    }
                    dw[j] = self.sq[j] * w_j;
                    for i in 0..d {
                        if m[(i, j)] == 0.0 {
                            continue;
                        }
                        let mut u = 0.0;
                        for c in 0..=d {
                            u += root[(i, c)] * z[c];
                        }
                        zeta[i] += m[(i, j)] * self.sq[j] * u;
                    }
                }
            }
            (SigmaMat::Dense(_), None) => unreachable!("dense sampler not prepared"),
        }
    }

    /// Convolution noise only; one normal per coordinate in the diagonal case.
    pub(crate) fn sample_zeta(&self, sigma: &SigmaMat, rng: &mut PathRng, zeta: &mut [f64], dw: &mut [f64], scratch: &mut [f64]) {
        match sigma {
            SigmaMat::Diagonal(s) => {
                for i in 0..s.len() {
                    zeta[i] = s[i] * self.sq[i] * self.diag[i].0 * rng.sample::<f64, _>(StandardNormal);
                }
            }
            SigmaMat::Dense(_) => self.sample(sigma, rng, zeta, dw, scratch),
        }
    }

    /// Plain `ΔW_k` only.
    pub(crate) fn sample_dw(&self, rng: &mut PathRng, dw: &mut [f64]) {
        let sdt = self.dt.sqrt();
        for (w, s) in dw.iter_mut().zip(&self.sq) {
            *w = s * sdt * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// A simulated convolution-type process on a grid with its split
/// `X = M + V + A`:
/// `M_t = x₀ + Σ σ ΔW`, `V_t = Σ b dt`, `A_t = Σ A X_k dt` (left sums, so
/// `⟨A_t, φ⟩ ≈ ∫_0^t ⟨X_r, A*φ⟩ dr`).
#[derive(Clone, Debug)]
pub struct ConvolutionPath {
    grid: Grid,
    dim: usize,
    x: Vec<f64>,
    m_part: Vec<f64>,
    v_part: Vec<f64>,
    a_part: Vec<f64>,
}

impl ConvolutionPath {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    fn project_rows(&self, rows: &[f64], a: &[f64], label: &str) -> Result<SamplePath> {
        if a.len() != self.dim {
            return Err(Error::invalid("projection vector has the wrong dimension"));
        }
        let v = rows.chunks(self.dim).map(|r| r.iter().zip(a).map(|(x, y)| x * y).sum()).collect();
        SamplePath::new(self.grid, v, label)
    }

    /// `t ↦ ⟨a, X_t⟩`.
    pub fn project(&self, a: &[f64]) -> Result<SamplePath> {
        self.project_rows(&self.x, a, "X")
    }

    pub fn coordinate(&self, i: usize) -> Result<SamplePath> {
        let mut e = vec![0.0; self.dim];
        *e.get_mut(i).ok_or_else(|| Error::invalid("coordinate out of range"))? = 1.0;
        self.project(&e)
    }

    pub fn project_martingale(&self, a: &[f64]) -> Result<SamplePath> {
        self.project_rows(&self.m_part, a, "M")
    }

    pub fn project_bv(&self, a: &[f64]) -> Result<SamplePath> {
        self.project_rows(&self.v_part, a, "V")
    }

    pub fn project_a_part(&self, a: &[f64]) -> Result<SamplePath> {
        self.project_rows(&self.a_part, a, "A")
    }

    /// `max_k |X_k - (M_k + V_k + A_k)|`. Zero only in the limit `dt → 0`.
    pub fn split_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in 0..self.x.len() {
            worst = worst.max((self.x[p] - self.m_part[p] - self.v_part[p] - self.a_part[p]).abs());
        }
        worst
    }
}

/// Simulates `dX = (AX + b(t,X))dt + σ(t,X)dW`, `X_0 = x0`.
pub fn simulate_convolution(
    space: &GalerkinSpace,
    coeffs: &dyn CoeffFns,
    x0: &[f64],
    grid: &Grid,
    scheme: Scheme,
    seed: u64,
) -> Result<ConvolutionPath> {
    let d = space.dim();
    if x0.len() != d || coeffs.dim() != d {
        return Err(Error::invalid("initial state and coefficients must match the space dimension"));
    }
    let n = grid.steps();
    let dt = grid.dt();
    let dense = matches!(coeffs.diffusion(0.0, x0).as_ref(), SigmaMat::Dense(_)) || !coeffs.state_independent();
    let noise = StepNoise::new(space, dt, dense)?;
    let e = space.semigroup(dt);
    let p1: Vec<f64> = space.a().iter().map(|&a| phi1(a, dt)).collect();
    let mut rng = path_rng(seed);

    let len = (n + 1) * d;
    let mut x = Vec::with_capacity(len);
    let mut m_part = Vec::with_capacity(len);
    let mut v_part = Vec::with_capacity(len);
    let mut a_part = Vec::with_capacity(len);
    x.extend_from_slice(x0);
    m_part.extend_from_slice(x0);
    v_part.resize(d, 0.0);
    a_part.resize(d, 0.0);

    let (mut b, mut zeta, mut dw, mut sdw) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut scratch = vec![0.0; d + 1];
    for k in 0..n {
        let t = grid.time(k);
        let cur = k * d;
        let xk: Vec<f64> = x[cur..cur + d].to_vec();
        coeffs.drift(t, &xk, &mut b);
        let sigma = coeffs.diffusion(t, &xk);
        match scheme {
            Scheme::ExponentialIntegrator => {
                noise.sample(&sigma, &mut rng, &mut zeta, &mut dw, &mut scratch);
                sigma.apply(&dw, &mut sdw);
                for i in 0..d {
                    x.push(e[i] * xk[i] + p1[i] * b[i] + zeta[i]);
                }
            }
            Scheme::ExponentialEuler => {
                noise.sample_dw(&mut rng, &mut dw);
                sigma.apply(&dw, &mut sdw);
                for i in 0..d {
                    x.push(e[i] * (xk[i] + b[i] * dt + sdw[i]));
                }
            }
        }
        for i in 0..d {
            let v = x[cur + d + i];
            if !v.is_finite() {
                return Err(Error::Numerical(format!("state diverged at step {k}")));
            }
            m_part.push(m_part[cur + i] + sdw[i]);
            v_part.push(v_part[cur + i] + b[i] * dt);
            a_part.push(a_part[cur + i] + space.a()[i] * xk[i] * dt);
        }
    }
    Ok(ConvolutionPath {
        grid: *grid,
        dim: d,
        x,
        m_part,
        v_part,
        a_part,
    })
}

/// χ-QV of convolution paths against the rank-one form `φ = a ⊗ b`.
#[derive(Clone, Debug)]
pub struct ChiQvConvolution {
    pub series: EstimateSeries,
    /// `∫_0^t Tr(L_φ (σQ^{1/2})(σQ^{1/2})*) dr` for constant `σ`.
    pub closed_form: f64,
    /// Ensemble mean of the estimator applied to the `A` part, per ε.
    pub a_part: Vec<f64>,
    /// `a_part` strictly decreases as ε shrinks.
    pub a_part_decreasing: bool,
}

impl ChiQvConvolution {
    pub fn relative_error(&self) -> f64 {
        (self.series.extrapolated - self.closed_form).abs() / self.closed_form.abs().max(f64::MIN_POSITIVE)
    }

    /// `A`-part value at the smallest ε.
    pub fn a_part_finest(&self) -> f64 {
        self.a_part[self.series.finest_index()]
    }
}

/// `(1/ε) ∫_0^t ⟨a, X_{r+ε} - X_r⟩⟨b, X_{r+ε} - X_r⟩ dr` over the ε ladder,
/// with the closed form for constant `σ`.
#[allow(clippy::too_many_arguments)]
pub fn chi_qv_convolution(
    paths: &[ConvolutionPath],
    space: &GalerkinSpace,
    sigma: &SigmaMat,
    a: &[f64],
    b: &[f64],
    schedule: &EpsSchedule,
    t: f64,
    method: Extrapolation,
    exec: Exec,
) -> Result<ChiQvConvolution> {
    let first = paths.first().ok_or_else(|| Error::invalid("no paths"))?;
    let cells = first.grid().cells_up_to(t)?;
    let per = exec.try_map(paths.len(), |p| -> Result<(Vec<f64>, Vec<f64>)> {
        let path = &paths[p];
        let (xa, xb) = (path.project(a)?, path.project(b)?);
        let (aa, ab) = (path.project_a_part(a)?, path.project_a_part(b)?);
        let full = schedule.steps().iter().map(|&k| cov_sum(xa.values(), xb.values(), k, cells)).collect();
        let apart = schedule.steps().iter().map(|&k| cov_sum(aa.values(), ab.values(), k, cells)).collect();
        Ok((full, apart))
    })?;
    let (full, apart): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    let series = EstimateSeries::from_paths(t, schedule.eps_values(), full, method)?;
    let a_part: Vec<f64> = (0..schedule.len())
        .map(|l| apart.iter().map(|r| r[l]).sum::<f64>() / apart.len() as f64)
        .collect();
    // Ladder is sorted from the largest ε to the smallest.
    let a_part_decreasing = a_part.windows(2).all(|w| w[1] < w[0]);

    let phi = DVector::from_row_slice(a) * DVector::from_row_slice(b).transpose();
    let closed_form = if sigma.is_zero() {
        0.0
    } else {
        t * pairing_trace(&sigma.covariance(space.q()), &phi)?
    };
    Ok(ChiQvConvolution {
        series,
        closed_form,
        a_part,
        a_part_decreasing,
    })
}

/// Ensemble of convolution paths with seeds `derive_seed(master, i)`.
#[allow(clippy::too_many_arguments)]
pub fn convolution_ensemble(
    space: &GalerkinSpace,
    coeffs: &dyn CoeffFns,
    x0: &[f64],
    grid: &Grid,
    scheme: Scheme,
    count: usize,
    master_seed: u64,
    exec: Exec,
) -> Result<Vec<ConvolutionPath>> {
    exec.try_map(count, |i| {
        simulate_convolution(space, coeffs, x0, grid, scheme, derive_seed(master_seed, i as u64))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn space(d: usize) -> GalerkinSpace {
        GalerkinSpace::heat(d, 2.0).unwrap()
    }

    #[test]
    fn q_wiener_covariance() {
        let s = space(4);
        let grid = Grid::new(1.0, 10_000).unwrap();
        let w = simulate_q_wiener(&s, &grid, 3);
        let c = w.empirical_covariance();
        for i in 0..4 {
            // Relative sampling error of a variance from 1e4 draws is about 1.4%.
            assert!((c[(i, i)] / s.q()[i] - 1.0).abs() < 0.06, "coordinate {i}: {}", c[(i, i)]);
        }
        assert!((c.trace() / s.trace_q() - 1.0).abs() < 0.05);
    }

    #[test]
    fn deterministic_drift_is_exact() {
        let s = GalerkinSpace::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let c = Coeffs::zero(2);
        let c = Coeffs::constant(vec![0.5, -1.0], c.sigma).unwrap();
        let grid = Grid::new(1.0, 64).unwrap();
        for scheme in [Scheme::ExponentialEuler, Scheme::ExponentialIntegrator] {
            let p = simulate_convolution(&s, &c, &[1.0, 2.0], &grid, scheme, 1).unwrap();
            for k in 0..=64 {
                let t = grid.time(k);
                assert!((p.state(k)[0] - (1.0 + 0.5 * t)).abs() < 1e-13);
                assert!((p.state(k)[1] - (2.0 - t)).abs() < 1e-13);
            }
            assert!(p.split_defect() < 1e-13);
        }
    }

    #[test]
    fn free_semigroup_flow() {
        let s = space(5);
        let grid = Grid::new(0.5, 32).unwrap();
        let x0 = [1.0, -0.5, 0.3, 0.2, 0.1];
        let p = simulate_convolution(&s, &Coeffs::zero(5), &x0, &grid, Scheme::ExponentialIntegrator, 9).unwrap();
        let want = s.apply_semigroup(0.5, &x0);
        for i in 0..5 {
            assert!((p.terminal()[i] - want[i]).abs() <= 1e-13 * x0[i].abs());
        }
    }

    #[test]
    fn ou_variance_matches() {
        let s = space(3);
        let grid = Grid::new(0.5, 16).unwrap();
        let c = Coeffs::constant(vec![0.0; 3], SigmaMat::identity(3)).unwrap();
        let paths = convolution_ensemble(&s, &c, &[0.0; 3], &grid, Scheme::ExponentialIntegrator, 4000, 5, Exec::Sequential)
            .unwrap();
        for i in 0..3 {
            let xs: Vec<f64> = paths.iter().map(|p| p.terminal()[i]).collect();
            let a = s.a()[i];
            let want = s.q()[i] * (1.0 - (2.0 * a * 0.5).exp()) / (-2.0 * a);
            // Sample variance from 4000 draws: relative error about 2.2%.
            assert!((stats::variance(&xs) / want - 1.0).abs() < 0.1, "mode {i}");
        }
    }

    #[test]
    fn dense_and_diagonal_samplers_agree_in_law() {
        let s = space(3);
        let grid = Grid::new(0.25, 8).unwrap();
        let dense = Coeffs::constant(vec![0.0; 3], SigmaMat::Dense(DMatrix::identity(3, 3))).unwrap();
        let paths = convolution_ensemble(&s, &dense, &[0.0; 3], &grid, Scheme::ExponentialIntegrator, 4000, 8, Exec::Sequential)
            .unwrap();
        let a = s.a()[0];
        let want = s.q()[0] * (1.0 - (2.0 * a * 0.25).exp()) / (-2.0 * a);
        let xs: Vec<f64> = paths.iter().map(|p| p.terminal()[0]).collect();
        assert!((stats::variance(&xs) / want - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_sigma_gives_zero_chi_qv() {
        let s = space(3);
        let grid = Grid::new(1.0, 256).unwrap();
        let c = Coeffs::zero(3);
        let paths = convolution_ensemble(&s, &c, &[0.0; 3], &grid, Scheme::ExponentialIntegrator, 4, 1, Exec::Sequential)
            .unwrap();
        let sched = EpsSchedule::default_for(&grid).unwrap();
        let e1 = [1.0, 0.0, 0.0];
        let r = chi_qv_convolution(&paths, &s, &c.sigma, &e1, &e1, &sched, 0.5, Extrapolation::default(), Exec::Sequential)
            .unwrap();
        assert_eq!(r.closed_form, 0.0);
        assert!(r.series.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lipschitz_check_on_affine() {
        let s = space(3);
        let b1 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.2, 0.1]));
        let c = Coeffs::affine(vec![0.1; 3], Some(b1), SigmaMat::identity(3)).unwrap();
        assert!((c.lipschitz() - 0.5).abs() < 1e-12);
        let worst = check_lipschitz(&c, &s, 1.0, 2.0, 500, 3).unwrap();
        assert!(worst <= 1.0, "ratio {worst}");
    }
}
