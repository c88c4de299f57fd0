//! Monte Carlo mild solutions `V(s, η) = E g(Y^s_s)` of the Kolmogorov
//! equation, the Ornstein–Uhlenbeck quadratic oracle and the pathwise
//! strong-solution decomposition.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::dynamics::{CoeffFns, Scheme, SigmaMat, StepNoise};
use super::{phi1, GalerkinSpace};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid_paths::fmt17;
use crate::rng::{derive_seed, path_rng};
use crate::stats;

/// Terminal function `g: ℝ^d → ℝ`.
pub trait Payoff2: Sync {
    fn eval(&self, x: &[f64]) -> f64;
    /// Declared polynomial growth degree.
    fn growth_degree(&self) -> u32;
}

/// `g(x) = ⟨x, G x⟩ + ⟨c, x⟩` with `G` symmetrized on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticG {
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl QuadraticG {
    pub fn new(g: DMatrix<f64>, c: Vec<f64>) -> Result<Self> {
        if !g.is_square() || g.nrows() != c.len() {
            return Err(Error::invalid("G must be square and match c"));
        }
        let g = (&g + g.transpose()) * 0.5;
        Ok(QuadraticG { g, c: DVector::from_vec(c) })
    }

    pub fn linear(c: Vec<f64>) -> Self {
        let d = c.len();
        QuadraticG {
            g: DMatrix::zeros(d, d),
            c: DVector::from_vec(c),
        }
    }

    /// `|x|²`.
    pub fn squared_norm(dim: usize) -> Self {
        QuadraticG {
            g: DMatrix::identity(dim, dim),
            c: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

impl Payoff2 for QuadraticG {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let row: f64 = x.iter().enumerate().map(|(j, xj)| self.g[(i, j)] * xj).sum();
            acc += xi * row + self.c[i] * xi;
        }
        acc
    }

    fn growth_degree(&self) -> u32 {
        if self.g.iter().all(|v| *v == 0.0) {
            1
        } else {
            2
        }
    }
}

/// `V(s, η) = E g(Y^s_s)` where
/// `dY_t = (A Y_t + b(s-t, Y_t))dt + σ(s-t, Y_t)dW_t`, `Y_0 = η`.
pub struct KolmoProblem<C, G> {
    pub space: GalerkinSpace,
    pub coeffs: C,
    pub g: G,
    pub s: f64,
    pub eta: Vec<f64>,
    /// Time steps on `[0, s]`.
    pub steps: usize,
    pub scheme: Scheme,
}

impl<C: CoeffFns, G: Payoff2> KolmoProblem<C, G> {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let d = self.space.dim();
        if self.eta.len() != d || self.coeffs.dim() != d {
            return Err(Error::invalid("eta and coefficients must match the space dimension"));
        }
        if !(self.s > 0.0 && self.s <= horizon) {
            return Err(Error::invalid(format!("s = {} must lie in (0, {horizon}]", self.s)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be positive"));
        }
        Ok(())
    }

    /// `g(Y^s_s)` along one path, or `None` if the path produced a NaN.
    fn sample_path(&self, noise: &StepNoise, seed: u64) -> Option<f64> {
        let d = self.space.dim();
        let dt = self.s / self.steps as f64;
        let e = self.space.semigroup(dt);
        let mut rng = path_rng(seed);
        let mut y = self.eta.clone();
        let (mut b, mut zeta, mut dw, mut sdw) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut scratch = vec![0.0; d + 1];
        for k in 0..self.steps {
            let t = self.s - k as f64 * dt;
            self.coeffs.drift(t, &y, &mut b);
            let sigma = self.coeffs.diffusion(t, &y);
            match self.scheme {
                Scheme::ExponentialIntegrator => {
                    noise.sample_zeta(&sigma, &mut rng, &mut zeta, &mut dw, &mut scratch);
                    for i in 0..d {
                        y[i] = e[i] * y[i] + phi1(self.space.a()[i], dt) * b[i] + zeta[i];
                    }
                }
                Scheme::ExponentialEuler => {
                    noise.sample_dw(&mut rng, &mut dw);
                    sigma.apply(&dw, &mut sdw);
                    for i in 0..d {
                        y[i] = e[i] * (y[i] + b[i] * dt + sdw[i]);
                    }
                }
            }
        }
        let v = self.g.eval(&y);
        v.is_finite().then_some(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KolmoEstimate {
    pub v_hat: f64,
    pub stderr: f64,
    pub paths_used: usize,
    /// Paths excluded because they produced a non-finite value.
    pub nan_paths: usize,
}

/// Monte Carlo mean of `g(Y^s_s)` over `m` paths seeded
/// `derive_seed(seed, i)`.
pub fn kolmogorov_mc<C: CoeffFns, G: Payoff2>(
    problem: &KolmoProblem<C, G>,
    m: usize,
    seed: u64,
    exec: Exec,
) -> Result<KolmoEstimate> {
    if m == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let dense = !problem.coeffs.state_independent()
        || matches!(problem.coeffs.diffusion(problem.s, &problem.eta).as_ref(), SigmaMat::Dense(_));
    let noise = StepNoise::new(&problem.space, problem.s / problem.steps as f64, dense)?;
    let samples = exec.map(m, |i| problem.sample_path(&noise, derive_seed(seed, i as u64)));
    let good: Vec<f64> = samples.into_iter().flatten().collect();
    let nan_paths = m - good.len();
    if good.is_empty() {
        return Err(Error::Numerical("every Monte Carlo path produced a non-finite value".into()));
    }
    Ok(KolmoEstimate {
        v_hat: stats::mean(&good),
        stderr: if good.len() > 1 { stats::std_error(&good) } else { 0.0 },
        paths_used: good.len(),
        nan_paths,
    })
}

/// Ornstein–Uhlenbeck dynamics with constant `b̄`, `σ̄` and quadratic `g`.
/// Closed forms in eigen-coordinates:
/// `m_τ(y) = e^{τA}y + φ₁(τA) b̄`,
/// `Σ_τ = (S_ij φ₁((a_i + a_j)τ))` with `S = σ̄ Q σ̄ᵀ`,
/// `v(τ, y) = ⟨m, G m⟩ + Tr(G Σ_τ) + ⟨c, m⟩`.
#[derive(Clone, Debug)]
pub struct OuQuadratic {
    pub space: GalerkinSpace,
    pub b: Vec<f64>,
    pub sigma: SigmaMat,
    pub g: QuadraticG,
    s_cov: DMatrix<f64>,
}

impl OuQuadratic {
    pub fn new(space: GalerkinSpace, b: Vec<f64>, sigma: SigmaMat, g: QuadraticG) -> Result<Self> {
        let d = space.dim();
        if b.len() != d || sigma.dim() != d || g.dim() != d {
            return Err(Error::invalid("OU oracle dimensions disagree"));
        }
        let s_cov = sigma.covariance(space.q());
        Ok(OuQuadratic {
            space,
            b,
            sigma,
            g,
            s_cov,
        })
    }

    /// `σ̄ Q σ̄ᵀ`.
    pub fn noise_covariance(&self) -> &DMatrix<f64> {
        &self.s_cov
    }

    pub fn mean(&self, tau: f64, y: &[f64]) -> DVector<f64> {
        let a = self.space.a();
        DVector::from_iterator(a.len(), (0..a.len()).map(|i| (a[i] * tau).exp() * y[i] + phi1(a[i], tau) * self.b[i]))
    }

    pub fn covariance(&self, tau: f64) -> DMatrix<f64> {
        let a = self.space.a();
        DMatrix::from_fn(a.len(), a.len(), |i, j| self.s_cov[(i, j)] * phi1(a[i] + a[j], tau))
    }

    pub fn value(&self, tau: f64, y: &[f64]) -> f64 {
        let m = self.mean(tau, y);
        let cov = self.covariance(tau);
        m.dot(&(&self.g.g * &m)) + (&self.g.g * cov).trace() + self.g.c.dot(&m)
    }

    /// `D_y v(τ, y) = e^{τA}(2 G m_τ(y) + c)`.
    pub fn dv(&self, tau: f64, y: &[f64]) -> DVector<f64> {
        let m = self.mean(tau, y);
        let inner = &self.g.g * m * 2.0 + &self.g.c;
        let e = self.space.semigroup(tau);
        DVector::from_iterator(e.len(), (0..e.len()).map(|i| e[i] * inner[i]))
    }

    /// `D²_y v(τ) = 2 e^{τA} G e^{τA}`.
    pub fn d2v(&self, tau: f64) -> DMatrix<f64> {
        let e = self.space.semigroup(tau);
        DMatrix::from_fn(e.len(), e.len(), |i, j| 2.0 * e[i] * self.g.g[(i, j)] * e[j])
    }

    /// `∫_0^s E⟨Dv(s-r, Y_r), S Dv(s-r, Y_r)⟩ dr` with `Y_r ~ N(m_r(η), Σ_r)`,
    /// composite Simpson on `2·half_intervals` panels.
    pub fn isometry_variance(&self, s: f64, eta: &[f64], half_intervals: usize) -> f64 {
        let n = 2 * half_intervals.max(1);
        let h = s / n as f64;
        let integrand = |r: f64| {
            let tau = s - r;
            let e = self.space.semigroup(tau);
            let ed = DMatrix::from_diagonal(&DVector::from_row_slice(&e));
            // Dv(τ, y) = L y + ℓ.
            let l = &ed * &self.g.g * &ed * 2.0;
            let p1 = DVector::from_iterator(e.len(), (0..e.len()).map(|i| phi1(self.space.a()[i], tau) * self.b[i]));
            let ell = &ed * (&self.g.g * p1 * 2.0 + &self.g.c);
            let mu = self.mean(r, eta);
            let mean_dv = &l * mu + ell;
            let cov = self.covariance(r);
            mean_dv.dot(&(&self.s_cov * &mean_dv)) + (l.transpose() * &self.s_cov * &l * cov).trace()
        };
        let mut acc = integrand(0.0) + integrand(s);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(k as f64 * h);
        }
        acc * h / 3.0
    }

    /// The problem with these coefficients, for [`kolmogorov_mc`].
    pub fn problem(&self, s: f64, eta: Vec<f64>, steps: usize) -> Result<KolmoProblem<super::Coeffs, QuadraticG>> {
        Ok(KolmoProblem {
            space: self.space.clone(),
            coeffs: super::Coeffs::constant(self.b.clone(), self.sigma.clone())?,
            g: self.g.clone(),
            s,
            eta,
            steps,
            scheme: Scheme::ExponentialIntegrator,
        })
    }
}

/// `V(s, η)` from the Gaussian moments.
pub fn ou_oracle(ou: &OuQuadratic, s: f64, eta: &[f64]) -> f64 {
    ou.value(s, eta)
}

/// Residual statistics at one step size.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionLevel {
    pub steps: usize,
    pub dt: f64,
    /// `mean |R|` with the second-order correction of the stochastic sum.
    pub mean_abs_r: f64,
    pub mean_r: f64,
    pub stderr_r: f64,
    /// `mean |R|` with the plain left-point sum.
    pub mean_abs_r_plain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionReport {
    pub levels: Vec<DecompositionLevel>,
    /// `mean |R|` ratios between successive levels (finer over coarser).
    pub halving_ratios: Vec<f64>,
    /// Mean and standard error of the stochastic integral at the finest level.
    pub integral_mean: f64,
    pub integral_stderr: f64,
    pub integral_variance: f64,
    pub isometry_variance: f64,
}

impl DecompositionReport {
    pub fn variance_rel_error(&self) -> f64 {
        (self.integral_variance - self.isometry_variance).abs() / self.isometry_variance.abs().max(f64::MIN_POSITIVE)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "steps,dt,mean_abs_R,mean_R,stderr_R,mean_abs_R_plain")?;
        for l in &self.levels {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                l.steps,
                fmt17(l.dt),
                fmt17(l.mean_abs_r),
                fmt17(l.mean_r),
                fmt17(l.stderr_r),
                fmt17(l.mean_abs_r_plain)
            )?;
        }
        Ok(())
    }
}

/// Pathwise check of
/// `g(Y^s_s) = v(s, η) + ∫_0^s ⟨Dv(s-r, Y_r), σ̄ dW_r⟩`.
///
/// Paths are simulated once on the finest grid with the exponential
/// integrator; coarser levels reuse the same Brownian path (states at the
/// coarse nodes, increments summed). For each level
/// `R = v(s, η) + Σ_k [⟨Dv_k, ξ_k⟩ + ½(ξ_kᵀ D²v_k ξ_k - Tr(D²v_k S) dt)] - g(Y_n)`
/// with `ξ_k = σ̄ ΔW_k`; the bracketed correction has mean zero and lifts the
/// left-point sum to first order in `dt`.
pub fn decomposition_check(
    ou: &OuQuadratic,
    s: f64,
    eta: &[f64],
    level_steps: &[usize],
    m: usize,
    seed: u64,
    exec: Exec,
) -> Result<DecompositionReport> {
    let d = ou.space.dim();
    if eta.len() != d {
        return Err(Error::invalid("eta has the wrong dimension"));
    }
    if level_steps.is_empty() || m < 2 {
        return Err(Error::invalid("need at least one level and two paths"));
    }
    let mut levels: Vec<usize> = level_steps.to_vec();
    levels.sort_unstable();
    let finest = *levels.last().expect("non-empty");
    if levels.iter().any(|&n| n == 0 || !finest.is_multiple_of(n)) {
        return Err(Error::invalid("every level must divide the finest step count"));
    }
    let dt_f = s / finest as f64;
    let noise = StepNoise::new(&ou.space, dt_f, matches!(ou.sigma, SigmaMat::Dense(_)))?;
    let e_f = ou.space.semigroup(dt_f);
    let p1_f: Vec<f64> = ou.space.a().iter().map(|&a| phi1(a, dt_f)).collect();
    let v0 = ou.value(s, eta);

    // Deterministic per-level tables: D²v at each node and its trace term.
    let tables: Vec<(Vec<DMatrix<f64>>, Vec<f64>)> = levels
        .iter()
        .map(|&n| {
            let dt = s / n as f64;
            let h: Vec<DMatrix<f64>> = (0..n).map(|k| ou.d2v(s - k as f64 * dt)).collect();
            let tr = h.iter().map(|h| (h * &ou.s_cov).trace() * dt).collect();
            (h, tr)
        })
        .collect();

    // Per path: (R corrected, R plain) per level and the finest integral.
    let per_path = exec.map(m, |p| {
        let mut rng = path_rng(derive_seed(seed, p as u64));
        let mut ys = Vec::with_capacity((finest + 1) * d);
        let mut dws = Vec::with_capacity(finest * d);
        ys.extend_from_slice(eta);
        let (mut zeta, mut dw) = (vec![0.0; d], vec![0.0; d]);
        let mut scratch = vec![0.0; d + 1];
        for k in 0..finest {
            noise.sample(&ou.sigma, &mut rng, &mut zeta, &mut dw, &mut scratch);
            for i in 0..d {
                let y = e_f[i] * ys[k * d + i] + p1_f[i] * ou.b[i] + zeta[i];
                ys.push(y);
            }
            dws.extend_from_slice(&dw);
        }
        let g_end = ou.g.eval(&ys[finest * d..]);
        let mut out = Vec::with_capacity(levels.len());
        let mut finest_integral = 0.0;
        let (mut w, mut xi) = (vec![0.0; d], vec![0.0; d]);
        for (li, &n) in levels.iter().enumerate() {
            let r = finest / n;
            let dt = s / n as f64;
            let (h, tr) = &tables[li];
            let (mut plain, mut corr) = (0.0, 0.0);
            for k in 0..n {
                w.fill(0.0);
                for j in 0..r {
                    let f = (k * r + j) * d;
                    for i in 0..d {
                        w[i] += dws[f + i];
                    }
                }
                ou.sigma.apply(&w, &mut xi);
                let y = &ys[k * r * d..(k * r + 1) * d];
                let dv = ou.dv(s - k as f64 * dt, y);
                plain += (0..d).map(|i| dv[i] * xi[i]).sum::<f64>();
                let hk = &h[k];
                let mut quad = 0.0;
                for i in 0..d {
                    let mut row = 0.0;
                    for j in 0..d {
                        row += hk[(i, j)] * xi[j];
                    }
                    quad += xi[i] * row;
                }
                corr += 0.5 * (quad - tr[k]);
            }
            out.push((v0 + plain + corr - g_end, v0 + plain - g_end));
            if n == finest {
                finest_integral = plain + corr;
            }
        }
        (out, finest_integral)
    });

    let mut report_levels = Vec::with_capacity(levels.len());
    for (li, &n) in levels.iter().enumerate() {
        let r: Vec<f64> = per_path.iter().map(|(o, _)| o[li].0).collect();
        let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        let plain: Vec<f64> = per_path.iter().map(|(o, _)| o[li].1.abs()).collect();
        report_levels.push(DecompositionLevel {
            steps: n,
            dt: s / n as f64,
            mean_abs_r: stats::mean(&abs),
            mean_r: stats::mean(&r),
            stderr_r: stats::std_error(&r),
            mean_abs_r_plain: stats::mean(&plain),
        });
    }
    let halving_ratios = report_levels.windows(2).map(|w| w[1].mean_abs_r / w[0].mean_abs_r).collect();
    let integrals: Vec<f64> = per_path.iter().map(|(_, i)| *i).collect();
    Ok(DecompositionReport {
        levels: report_levels,
        halving_ratios,
        integral_mean: stats::mean(&integrals),
        integral_stderr: stats::std_error(&integrals),
        integral_variance: stats::variance(&integrals),
        isometry_variance: ou.isometry_variance(s, eta, 500),
    })
}
