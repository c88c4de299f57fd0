//! ε-regularization estimators.
//!
//! With `ε = k·dt` and the outer integral taken as a left-endpoint Riemann sum
//! over grid nodes, the estimators reduce to index shifts:
//!
//! ```text
//! [X, Y]^ε_t     = (1/k) Σ_{j < J} (X_{j+k} - X_j)(Y_{j+k} - Y_j)
//! ∫_0^t Y d⁻X (ε) = (1/k) Σ_{j < J} Y_j (X_{j+k} - X_j)
//! ```
//!
//! where `t = J·dt` and indices past `n` are clamped (the path is frozen at
//! `X_T` after the horizon).

pub mod deterministic;
pub mod extrapolate;

use std::io::Write;

pub use extrapolate::Extrapolation;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid_paths::{check_same_grid, fmt17, Grid, PathEnsemble, SamplePath};
use crate::stats;

/// Decreasing ladder of regularization widths, each a multiple of `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsSchedule {
    dt: f64,
    steps: Vec<usize>,
}

impl EpsSchedule {
    pub const DEFAULT_MULTIPLES: [usize; 6] = [64, 32, 16, 8, 4, 2];

    /// Widths `k·dt` for the given multiples (any order, duplicates removed).
    /// The smallest multiple must be at least 2.
    pub fn from_multiples(grid: &Grid, multiples: &[usize]) -> Result<Self> {
        let mut steps = multiples.to_vec();
        steps.sort_unstable_by(|a, b| b.cmp(a));
        steps.dedup();
        match steps.last() {
            None => return Err(Error::invalid("empty eps ladder")),
            Some(&k) if k < 2 => {
                return Err(Error::invalid("smallest eps must be at least 2*dt"));
            }
            _ => {}
        }
        if steps[0] > grid.steps() {
            return Err(Error::invalid(format!(
                "eps = {}*dt exceeds the horizon ({} steps)",
                steps[0],
                grid.steps()
            )));
        }
        Ok(EpsSchedule { dt: grid.dt(), steps })
    }

    /// Widths given in time units; each must be an integer multiple of `dt`.
    pub fn from_widths(grid: &Grid, widths: &[f64]) -> Result<Self> {
        let multiples = widths
            .iter()
            .map(|&w| grid.width_steps(w))
            .collect::<Result<Vec<_>>>()?;
        Self::from_multiples(grid, &multiples)
    }

    pub fn default_for(grid: &Grid) -> Result<Self> {
        Self::from_multiples(grid, &Self::DEFAULT_MULTIPLES)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Multiples of `dt`, strictly decreasing.
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn eps_values(&self) -> Vec<f64> {
        self.steps.iter().map(|&k| k as f64 * self.dt).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn smallest_steps(&self) -> usize {
        *self.steps.last().expect("non-empty")
    }

    pub fn smallest(&self) -> f64 {
        self.smallest_steps() as f64 * self.dt
    }
}

/// `(1/k) Σ_{j<cells} (x_{j+k} - x_j)(y_{j+k} - y_j)` with clamped indices.
pub fn cov_sum(x: &[f64], y: &[f64], k: usize, cells: usize) -> f64 {
    let n = x.len() - 1;
    let free = cells.min(n.saturating_sub(k));
    let mut acc = 0.0;
    for j in 0..free {
        acc += (x[j + k] - x[j]) * (y[j + k] - y[j]);
    }
    for j in free..cells {
        acc += (x[n] - x[j]) * (y[n] - y[j]);
    }
    acc / k as f64
}

/// Running values of [`cov_sum`] for `cells = 0..=n`.
pub fn covariation_curve(x: &[f64], y: &[f64], k: usize) -> Vec<f64> {
    let n = x.len() - 1;
    let inv = 1.0 / k as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 0..n {
        let jk = (j + k).min(n);
        acc += (x[jk] - x[j]) * (y[jk] - y[j]);
        out.push(acc * inv);
    }
    out
}

/// `(1/k) Σ_{j<cells} y_j (x_{j+k} - x_j)` with clamped indices.
pub fn forward_sum(y: &[f64], x: &[f64], k: usize, cells: usize) -> f64 {
    let n = x.len() - 1;
    let free = cells.min(n.saturating_sub(k));
    let mut acc = 0.0;
    for j in 0..free {
        acc += y[j] * (x[j + k] - x[j]);
    }
    for j in free..cells {
        acc += y[j] * (x[n] - x[j]);
    }
    acc / k as f64
}

/// Running values of [`forward_sum`] for `cells = 0..=n`.
pub fn forward_curve(y: &[f64], x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len() - 1;
    let inv = 1.0 / k as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 0..n {
        acc += y[j] * (x[(j + k).min(n)] - x[j]);
        out.push(acc * inv);
    }
    out
}

fn eps_and_cells(grid: &Grid, eps: f64, t: f64) -> Result<(usize, usize)> {
    Ok((grid.width_steps(eps)?, grid.cells_up_to(t)?))
}

/// `(1/ε) ∫_0^t (X_{s+ε} - X_s)(Y_{s+ε} - Y_s) ds`.
pub fn covariation_eps(x: &SamplePath, y: &SamplePath, eps: f64, t: f64) -> Result<f64> {
    check_same_grid(x, y)?;
    let (k, cells) = eps_and_cells(x.grid(), eps, t)?;
    Ok(cov_sum(x.values(), y.values(), k, cells))
}

/// `∫_0^t Y_r (X_{r+ε} - X_r) / ε dr`.
pub fn forward_integral_eps(y: &SamplePath, x: &SamplePath, eps: f64, t: f64) -> Result<f64> {
    check_same_grid(x, y)?;
    let (k, cells) = eps_and_cells(x.grid(), eps, t)?;
    Ok(forward_sum(y.values(), x.values(), k, cells))
}

/// Per-ε estimates of a regularized limit with diagnostics.
///
/// `per_path[i][l]` is path `i` at `eps[l]`; `values` and `stderr` are the
/// ensemble mean and its standard error (zero for a single path).
#[derive(Clone, Debug)]
pub struct EstimateSeries {
    pub t: f64,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mad: Vec<f64>,
    pub per_path: Vec<Vec<f64>>,
    pub method: Extrapolation,
    pub extrapolated: f64,
    pub extrapolated_stderr: f64,
    /// Series is monotone in ε across the ladder.
    pub monotone: bool,
    /// `|v(ε_min) - v(ε_2)| / max(|v(ε_min)|, tiny)`.
    pub last_rel_change: f64,
}

impl EstimateSeries {
    pub fn from_paths(t: f64, eps: Vec<f64>, per_path: Vec<Vec<f64>>, method: Extrapolation) -> Result<Self> {
        if per_path.is_empty() {
            return Err(Error::invalid("no paths in series"));
        }
        let m = eps.len();
        for (i, row) in per_path.iter().enumerate() {
            if row.len() != m {
                return Err(Error::invalid(format!("path {i} has {} estimates, expected {m}", row.len())));
            }
            if let Some(l) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite estimate for path {i} at eps = {}", eps[l])));
            }
        }
        let column = |l: usize| per_path.iter().map(|r| r[l]).collect::<Vec<_>>();
        let mut values = Vec::with_capacity(m);
        let mut stderr = Vec::with_capacity(m);
        let mut mad = Vec::with_capacity(m);
        for l in 0..m {
            let c = column(l);
            values.push(stats::mean(&c));
            stderr.push(if c.len() > 1 { stats::std_error(&c) } else { 0.0 });
            mad.push(stats::mad(&c));
        }
        let extrap: Vec<f64> = per_path.iter().map(|r| method.apply(&eps, r)).collect();
        let extrapolated = stats::mean(&extrap);
        let extrapolated_stderr = if extrap.len() > 1 { stats::std_error(&extrap) } else { 0.0 };
        let order = sorted_desc(&eps);
        let ordered: Vec<f64> = order.iter().map(|&l| values[l]).collect();
        let monotone = ordered.windows(2).all(|w| w[1] <= w[0]) || ordered.windows(2).all(|w| w[1] >= w[0]);
        let last_rel_change = if ordered.len() >= 2 {
            let a = ordered[ordered.len() - 1];
            let b = ordered[ordered.len() - 2];
            (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        Ok(EstimateSeries {
            t,
            eps,
            values,
            stderr,
            mad,
            per_path,
            method,
            extrapolated,
            extrapolated_stderr,
            monotone,
            last_rel_change,
        })
    }

    pub fn single(t: f64, eps: Vec<f64>, values: Vec<f64>, method: Extrapolation) -> Result<Self> {
        Self::from_paths(t, eps, vec![values], method)
    }

    pub fn paths(&self) -> usize {
        self.per_path.len()
    }

    pub fn per_path_extrapolated(&self) -> Vec<f64> {
        self.per_path.iter().map(|r| self.method.apply(&self.eps, r)).collect()
    }

    /// Mean estimate at the smallest ε.
    pub fn finest(&self) -> f64 {
        let l = self.finest_index();
        self.values[l]
    }

    pub fn finest_index(&self) -> usize {
        (0..self.eps.len())
            .min_by(|&a, &b| self.eps[a].total_cmp(&self.eps[b]))
            .expect("non-empty")
    }

    /// Dispersion across paths at the smallest ε is no larger than at the
    /// largest ε.
    pub fn mad_shrinking(&self) -> bool {
        let order = sorted_desc(&self.eps);
        self.mad[*order.last().unwrap()] <= self.mad[order[0]]
    }

    /// Concatenates the paths of two series over the same ladder.
    pub fn merge(mut self, other: EstimateSeries) -> Result<EstimateSeries> {
        if self.eps != other.eps || self.t != other.t {
            return Err(Error::invalid("cannot merge series over different ladders"));
        }
        self.per_path.extend(other.per_path);
        EstimateSeries::from_paths(self.t, self.eps, self.per_path, self.method)
    }

    /// Rows `eps,t,estimate,stderr`, largest ε first, without header.
    pub fn write_rows<W: Write>(&self, w: &mut W) -> Result<()> {
        for l in sorted_desc(&self.eps) {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(self.eps[l]),
                fmt17(self.t),
                fmt17(self.values[l]),
                fmt17(self.stderr[l])
            )?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,t,estimate,stderr")?;
        self.write_rows(&mut w)
    }
}

fn sorted_desc(eps: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..eps.len()).collect();
    idx.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
    idx
}

/// Covariation of two paths over a ladder, single-path series.
pub fn covariation(x: &SamplePath, y: &SamplePath, schedule: &EpsSchedule, t: f64) -> Result<EstimateSeries> {
    check_same_grid(x, y)?;
    let cells = x.grid().cells_up_to(t)?;
    let values = schedule
        .steps()
        .iter()
        .map(|&k| cov_sum(x.values(), y.values(), k, cells))
        .collect();
    EstimateSeries::single(t, schedule.eps_values(), values, Extrapolation::default())
}

pub fn quadratic_variation(x: &SamplePath, schedule: &EpsSchedule, t: f64) -> Result<EstimateSeries> {
    covariation(x, x, schedule, t)
}

/// Forward integral of `y` against `x` over a ladder.
pub fn forward_integral(y: &SamplePath, x: &SamplePath, schedule: &EpsSchedule, t: f64) -> Result<EstimateSeries> {
    check_same_grid(x, y)?;
    let cells = x.grid().cells_up_to(t)?;
    let values = schedule
        .steps()
        .iter()
        .map(|&k| forward_sum(y.values(), x.values(), k, cells))
        .collect();
    EstimateSeries::single(t, schedule.eps_values(), values, Extrapolation::default())
}

/// Runs `f` on every path of the ensemble; `f` returns one value per ladder
/// entry.
pub fn ensemble_series<F>(
    ens: &PathEnsemble,
    schedule: &EpsSchedule,
    t: f64,
    method: Extrapolation,
    exec: Exec,
    f: F,
) -> Result<EstimateSeries>
where
    F: Fn(&SamplePath) -> Result<Vec<f64>> + Sync + Send,
{
    let per_path = exec.try_map(ens.len(), |i| f(&ens.path(i)))?;
    EstimateSeries::from_paths(t, schedule.eps_values(), per_path, method)
}

/// Ensemble quadratic variation at time `t`.
pub fn ensemble_qv(ens: &PathEnsemble, schedule: &EpsSchedule, t: f64, exec: Exec) -> Result<EstimateSeries> {
    let cells = ens.grid().cells_up_to(t)?;
    ensemble_series(ens, schedule, t, Extrapolation::default(), exec, |p| {
        Ok(schedule
            .steps()
            .iter()
            .map(|&k| cov_sum(p.values(), p.values(), k, cells))
            .collect())
    })
}

/// Result of the improper forward integral `lim_{δ→0} ∫_0^{T-δ} Y d⁻X`.
#[derive(Clone, Debug)]
pub struct ImproperIntegral {
    /// Cut-offs δ, decreasing.
    pub deltas: Vec<f64>,
    /// Forward integral up to `T - δ` at the smallest ε of the schedule.
    pub values: Vec<f64>,
    /// Forward integral up to `T` itself.
    pub proper: f64,
    pub value: f64,
    /// Successive differences grow as δ shrinks instead of settling.
    pub diverging: bool,
}

impl ImproperIntegral {
    pub const DEFAULT_DELTA_MULTIPLES: [usize; 4] = [16, 8, 4, 2];
}

/// Evaluates the forward integral at `t = T - δ` for `δ = m·dt`,
/// `m ∈ delta_multiples`, at the smallest ε of `schedule`, and extrapolates
/// `δ → 0` with `method`.
pub fn improper_forward_integral(
    y: &SamplePath,
    x: &SamplePath,
    schedule: &EpsSchedule,
    delta_multiples: &[usize],
    method: Extrapolation,
) -> Result<ImproperIntegral> {
    check_same_grid(x, y)?;
    let n = x.grid().steps();
    let dt = x.grid().dt();
    let k = schedule.smallest_steps();
    let mut ms = delta_multiples.to_vec();
    ms.sort_unstable_by(|a, b| b.cmp(a));
    ms.dedup();
    if ms.is_empty() || ms[0] >= n || ms[ms.len() - 1] == 0 {
        return Err(Error::invalid("delta ladder must lie in (0, T)"));
    }
    let curve = forward_curve(y.values(), x.values(), k);
    let values: Vec<f64> = ms.iter().map(|&m| curve[n - m]).collect();
    let deltas: Vec<f64> = ms.iter().map(|&m| m as f64 * dt).collect();
    if let Some(l) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("forward integral not finite at delta = {}", deltas[l])));
    }
    let value = method.apply(&deltas, &values);
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let diverging = match diffs.split_last() {
        Some((last, earlier)) if !earlier.is_empty() => {
            let prev = earlier.iter().cloned().fold(0.0, f64::max);
            *last > 4.0 * prev && *last > 1e-12 * (1.0 + value.abs())
        }
        _ => false,
    };
    Ok(ImproperIntegral {
        deltas,
        values,
        proper: curve[n],
        value,
        diverging,
    })
}

/// `Y_t X_t - Y_0 X_0 - ∫Y d⁻X - ∫X d⁻Y - [X, Y]` at level ε.
///
/// The three ε-terms sum to `(1/ε)(∫_t^{t+ε} XY - ∫_0^ε XY)`, so the residual
/// is a boundary-averaging error that vanishes as ε → 0.
pub fn integration_by_parts_residual(x: &SamplePath, y: &SamplePath, eps: f64, t: f64) -> Result<f64> {
    check_same_grid(x, y)?;
    let (k, cells) = eps_and_cells(x.grid(), eps, t)?;
    let (xv, yv) = (x.values(), y.values());
    let lhs = yv[cells] * xv[cells] - yv[0] * xv[0];
    Ok(lhs - forward_sum(yv, xv, k, cells) - forward_sum(xv, yv, k, cells) - cov_sum(xv, yv, k, cells))
}

/// A function of `(t, x)` with its space derivative in closed form.
pub trait C01Fn: Sync {
    fn value(&self, t: f64, x: f64) -> f64;
    fn dx(&self, t: f64, x: f64) -> f64;
}

/// Left side: the ε-covariation of `f(·, X)` and `g(·, Y)` over the ladder.
/// Right side: `∫_0^t ∂_x f(s, X_s) ∂_x g(s, Y_s) d[X, Y]_s`, integrated
/// against the covariation curve at the smallest ε.
pub fn bvm_covariation_check(
    f: &dyn C01Fn,
    g: &dyn C01Fn,
    x: &SamplePath,
    y: &SamplePath,
    schedule: &EpsSchedule,
    t: f64,
) -> Result<(EstimateSeries, f64)> {
    check_same_grid(x, y)?;
    let fx = x.map_with_time(|s, v| f.value(s, v))?;
    let gy = y.map_with_time(|s, v| g.value(s, v))?;
    let lhs = covariation(&fx, &gy, schedule, t)?;
    let cells = x.grid().cells_up_to(t)?;
    let curve = covariation_curve(x.values(), y.values(), schedule.smallest_steps());
    let grid = x.grid();
    let rhs = (0..cells)
        .map(|j| {
            let s = grid.time(j);
            f.dx(s, x.values()[j]) * g.dx(s, y.values()[j]) * (curve[j + 1] - curve[j])
        })
        .sum();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_paths::{ensemble, simulate, ProcessSpec};

    fn grid(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    fn bm(n: usize, seed: u64) -> SamplePath {
        simulate(&ProcessSpec::brownian(1.0), grid(n), seed).unwrap()
    }

    #[test]
    fn schedule_rules() {
        let g = grid(128);
        let s = EpsSchedule::from_multiples(&g, &[2, 8, 4, 8]).unwrap();
        assert_eq!(s.steps(), &[8, 4, 2]);
        assert!(EpsSchedule::from_multiples(&g, &[1, 2]).is_err());
        assert!(EpsSchedule::from_multiples(&g, &[256]).is_err());
        assert!(EpsSchedule::from_widths(&g, &[0.015]).is_err());
        let w = EpsSchedule::from_widths(&g, &[4.0 / 128.0]).unwrap();
        assert_eq!(w.steps(), &[4]);
    }

    #[test]
    fn constant_paths_have_zero_covariation() {
        let c = SamplePath::constant(grid(64), 1.7);
        for k in [2, 4, 16] {
            assert_eq!(covariation_eps(&c, &c, k as f64 / 64.0, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_path_closed_form() {
        // X_s = s: increments are min(k, n - j)·dt, so the sum is explicit
        let n = 256;
        let g = grid(n);
        let x = SamplePath::from_fn(g, |s| s, "lin").unwrap();
        let dt = g.dt();
        for k in [2usize, 8, 32] {
            let oracle: f64 = (0..n).map(|j| (k.min(n - j) as f64 * dt).powi(2)).sum::<f64>() / k as f64;
            let v = covariation_eps(&x, &x, k as f64 * dt, 1.0).unwrap();
            assert!((v - oracle).abs() < 1e-14);
            // continuum value ε(1 - ε) + ε²/3 up to O(dt)
            let e = k as f64 * dt;
            assert!((v - (e - 2.0 * e * e / 3.0)).abs() < 2.0 * dt * e);
        }
    }

    #[test]
    fn covariation_curve_matches_pointwise() {
        let w = bm(64, 2);
        let c = covariation_curve(w.values(), w.values(), 4);
        for j in [0, 1, 30, 63, 64] {
            assert!((c[j] - cov_sum(w.values(), w.values(), 4, j)).abs() < 1e-13);
        }
        let f = forward_curve(w.values(), w.values(), 4);
        assert!((f[40] - forward_sum(w.values(), w.values(), 4, 40)).abs() < 1e-13);
    }

    #[test]
    fn brownian_qv_is_time() {
        let g = grid(2048);
        let e = ensemble(&ProcessSpec::brownian(1.0), g, 64, 7).unwrap();
        let s = EpsSchedule::default_for(&g).unwrap();
        let r = ensemble_qv(&e, &s, 1.0, Exec::default()).unwrap();
        assert!((r.extrapolated - 1.0).abs() < 0.05, "{}", r.extrapolated);
        assert!(r.mad_shrinking());
    }

    #[test]
    fn forward_integral_cases() {
        let g = grid(1024);
        let one = SamplePath::constant(g, 1.0);
        let w = bm(1024, 3);
        // telescoping mean: (1/ε)∫_t^{t+ε}X - (1/ε)∫_0^ε X
        let v = forward_integral_eps(&one, &w, 2.0 * g.dt(), 1.0).unwrap();
        let vals = w.values();
        let oracle = (vals[1024] * 2.0 - vals[0] - vals[1]) / 2.0;
        assert!((v - oracle).abs() < 1e-12);

        let r = SamplePath::from_fn(g, |s| s, "r").unwrap();
        let s = EpsSchedule::default_for(&g).unwrap();
        let fi = forward_integral(&r, &r, &s, 1.0).unwrap();
        assert!((fi.extrapolated - 0.5).abs() < 2.0 * g.dt());
    }

    #[test]
    fn ito_integral_of_brownian() {
        let g = grid(2048);
        let e = ensemble(&ProcessSpec::brownian(1.0), g, 40, 11).unwrap();
        let k = 2;
        let errs: Vec<f64> = e
            .iter()
            .map(|w| {
                let v = forward_sum(w.values(), w.values(), k, 2048);
                v - (w.terminal().powi(2) - 1.0) / 2.0
            })
            .collect();
        assert!(stats::mean(&errs).abs() < 0.05);
        assert!(stats::median(&errs.iter().map(|e| e.abs()).collect::<Vec<_>>()) < 0.05);
    }

    #[test]
    fn improper_equals_proper_for_bounded_integrand() {
        let g = grid(1024);
        let w = bm(1024, 5);
        let s = EpsSchedule::default_for(&g).unwrap();
        let y = w.map_with_time(|_, x| x.sin()).unwrap();
        let r = improper_forward_integral(&y, &w, &s, &ImproperIntegral::DEFAULT_DELTA_MULTIPLES, Extrapolation::Finest).unwrap();
        assert!((r.value - r.proper).abs() < 0.1);
        let zero = SamplePath::constant(g, 0.0);
        let z = improper_forward_integral(&zero, &w, &s, &[8, 4, 2], Extrapolation::Richardson3).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(!z.diverging);
    }

    #[test]
    fn integration_by_parts() {
        let g = grid(2048);
        let zero = SamplePath::constant(g, 0.0);
        let w = bm(2048, 8);
        assert_eq!(integration_by_parts_residual(&zero, &w, 4.0 * g.dt(), 1.0).unwrap(), 0.0);
        let ramp = SamplePath::from_fn(g, |s| s, "s").unwrap();
        let coarse = integration_by_parts_residual(&ramp, &w, 64.0 * g.dt(), 1.0).unwrap().abs();
        let fine = integration_by_parts_residual(&ramp, &w, 2.0 * g.dt(), 1.0).unwrap().abs();
        assert!(fine < 0.02, "{fine} vs {coarse}");
        let ww = integration_by_parts_residual(&w, &w, 2.0 * g.dt(), 1.0).unwrap();
        assert!(ww.abs() < 0.1);
    }

    struct Square;
    impl C01Fn for Square {
        fn value(&self, _t: f64, x: f64) -> f64 {
            x * x
        }
        fn dx(&self, _t: f64, x: f64) -> f64 {
            2.0 * x
        }
    }

    #[test]
    fn bracket_of_square() {
        let g = grid(4096);
        let w = bm(4096, 13);
        let s = EpsSchedule::default_for(&g).unwrap();
        let (lhs, rhs) = bvm_covariation_check(&Square, &Square, &w, &w, &s, 1.0).unwrap();
        let oracle: f64 = w.values()[..4096].iter().map(|x| 4.0 * x * x * g.dt()).sum();
        assert!((rhs - oracle).abs() < 0.15 * oracle.max(0.1));
        assert!((lhs.extrapolated - oracle).abs() < 0.2 * oracle.max(0.1));
    }
}
