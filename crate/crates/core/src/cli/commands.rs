//! Subcommand implementations. Each reads a [`Resolved`] config and writes
//! its CSVs into the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::config::{parse_list, Resolved};
use crate::chi_window::{chi_qv_formula, chi_qv_steps, Density, ElementaryFunctional, L2Density, ScalarFn, SquareMeasure, WindowGrid};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid_paths::{fmt17, DeclaredQv, Grid, PathEnsemble, PathSampler, ProcessSpec, SamplePath};
use crate::hilbert_kolmo::{
    decomposition_check, hs_identity_check, kolmogorov_mc, ou_oracle, pairing_trace, trace_and_bounds, Coeffs,
    GalerkinSpace, KolmoProblem, OperatorMat, OuQuadratic, QuadraticG, Scheme, SigmaMat,
};
use crate::ito_verify::{banach_ito_report, ito_report, C12Fn, ItoReport};
use crate::regcalc::{cov_sum, forward_sum, EpsSchedule, EstimateSeries, Extrapolation};
use crate::replicate::{replicate_payoff, solve_vanilla, ClosedFormSolution, Payoff, ReplicationSetup, VanillaProvider};
use crate::rng::{derive_seed, path_rng};
use crate::stats;

/// Files written by a run, relative to the output directory.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

struct Out<'a> {
    dir: &'a Path,
    summary: RunSummary,
}

impl<'a> Out<'a> {
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.summary.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, msg: String) {
        self.summary.notes.push(msg);
    }
}

pub(crate) fn dispatch(r: &Resolved, dir: &Path) -> Result<RunSummary> {
    let mut out = Out {
        dir,
        summary: RunSummary {
            out_dir: dir.to_path_buf(),
            ..RunSummary::default()
        },
    };
    let seed: u64 = r.parse("run.seed")?;
    let exec = Exec::default();
    match r.command() {
        "simulate" => simulate(r, seed, &mut out)?,
        "qv" => qv(r, seed, exec, &mut out)?,
        "forward" => forward(r, seed, exec, &mut out)?,
        "window-qv" => window_qv(r, seed, exec, &mut out)?,
        "ito-check" => ito_check(r, seed, exec, &mut out)?,
        "replicate" => replicate(r, seed, exec, &mut out)?,
        "kolmo" => kolmo(r, seed, exec, &mut out)?,
        "selftest" => selftest(seed, exec, &mut out)?,
        other => return Err(Error::Config(format!("unknown command '{other}'"))),
    }
    Ok(out.summary)
}

fn process_spec(r: &Resolved) -> Result<ProcessSpec> {
    let sigma = r.f64("process.sigma")?;
    let spec = match r.str("process.kind") {
        "bm" => ProcessSpec::brownian(sigma),
        "fbm" => ProcessSpec::fbm(r.f64("process.hurst")?),
        "bifbm" => ProcessSpec::bifractional(r.f64("process.hurst")?, r.f64("process.k")?),
        "bifbm-unit" => ProcessSpec::bifractional_unit_qv(r.f64("process.k")?, sigma),
        "dirichlet" => {
            let s = ProcessSpec::dirichlet_default(r.f64("process.scale")?);
            if sigma == 1.0 {
                s
            } else {
                s.scaled(sigma)
            }
        }
        other => {
            return Err(Error::Config(format!(
                "process.kind '{other}' (expected bm, fbm, bifbm, bifbm-unit or dirichlet)"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn grid(r: &Resolved) -> Result<Grid> {
    Grid::new(r.f64("grid.horizon")?, r.usize("grid.steps")?)
}

fn schedule(r: &Resolved, grid: &Grid) -> Result<EpsSchedule> {
    EpsSchedule::from_multiples(grid, &r.list::<usize>("est.eps_ladder")?)
}

fn sample_paths(spec: &ProcessSpec, grid: Grid, count: usize, seed: u64, exec: Exec) -> Result<Vec<SamplePath>> {
    let sampler = PathSampler::new(spec, grid)?;
    Ok(exec.map(count, |i| sampler.sample(derive_seed(seed, i as u64))))
}

fn scalar_fn(name: &str) -> Result<ScalarFn> {
    Ok(match name {
        "identity" => ScalarFn::Identity,
        "square" => ScalarFn::Square,
        "half-square" => ScalarFn::HalfSquare,
        "sine" => ScalarFn::Sine,
        "exp" => ScalarFn::Exp,
        other => return Err(Error::Config(format!("unknown function '{other}'"))),
    })
}

fn c12_fn(name: &str) -> Result<C12Fn> {
    Ok(match name {
        "identity" => C12Fn::Identity,
        "square" => C12Fn::Square,
        "half-square" => C12Fn::HalfSquare,
        "tx" => C12Fn::TimesX,
        "sine" => C12Fn::Sine,
        other => match other.strip_prefix("affine:") {
            Some(rest) => {
                let v: Vec<f64> = rest
                    .split(':')
                    .map(|s| s.parse().map_err(|_| Error::Config(format!("bad affine coefficients '{rest}'"))))
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return Err(Error::Config("affine needs a:b:c".into()));
                }
                C12Fn::Affine { a: v[0], b: v[1], c: v[2] }
            }
            None => return Err(Error::Config(format!("unknown function '{other}'"))),
        },
    })
}

/// `none`, `const:c` or `table:v0;v1;…`.
fn density(raw: &str, key: &str) -> Result<Option<Density>> {
    if raw == "none" {
        return Ok(None);
    }
    if let Some(c) = raw.strip_prefix("const:") {
        return c
            .parse()
            .map(|c| Some(Density::Const(c)))
            .map_err(|_| Error::Config(format!("{key}: bad constant '{c}'")));
    }
    if let Some(t) = raw.strip_prefix("table:") {
        return Ok(Some(Density::Table(semicolon_list(t, key)?)));
    }
    Err(Error::Config(format!("{key}: expected none, const:c or table:v0;v1;...")))
}

fn semicolon_list(raw: &str, key: &str) -> Result<Vec<f64>> {
    parse_list(&raw.replace(';', ",")).map_err(|_| Error::Config(format!("{key}: bad table '{raw}'")))
}

/// `const:c` repeated `d` times or `table:v1;…;vd`.
fn vector(raw: &str, d: usize, key: &str) -> Result<Vec<f64>> {
    let v = if let Some(c) = raw.strip_prefix("const:") {
        vec![c.parse().map_err(|_| Error::Config(format!("{key}: bad constant '{c}'")))?; d]
    } else if let Some(t) = raw.strip_prefix("table:") {
        semicolon_list(t, key)?
    } else {
        return Err(Error::Config(format!("{key}: expected const:c or table:v1;...")));
    };
    if v.len() != d {
        return Err(Error::Config(format!("{key}: expected {d} entries, got {}", v.len())));
    }
    Ok(v)
}

fn simulate(r: &Resolved, seed: u64, out: &mut Out) -> Result<()> {
    let ens = PathEnsemble::new(&process_spec(r)?, grid(r)?, r.usize("simulate.paths")?, seed)?;
    out.csv("paths.csv", |w| ens.write_csv(w))
}

/// Runs `f(path_index, k, cells)` over paths, ladder and times; one series
/// per time.
fn ladder_series<F>(
    paths: &[SamplePath],
    sched: &EpsSchedule,
    times: &[f64],
    method: Extrapolation,
    exec: Exec,
    f: F,
) -> Result<Vec<EstimateSeries>>
where
    F: Fn(usize, usize, usize) -> f64 + Sync + Send,
{
    let grid = paths.first().ok_or_else(|| Error::invalid("no paths"))?.grid();
    let cells: Vec<usize> = times.iter().map(|&t| grid.cells_up_to(t)).collect::<Result<_>>()?;
    let per = exec.map(paths.len(), |p| {
        cells
            .iter()
            .map(|&c| sched.steps().iter().map(|&k| f(p, k, c)).collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    });
    times
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let rows = per.iter().map(|p| p[ti].clone()).collect();
            EstimateSeries::from_paths(t, sched.eps_values(), rows, method)
        })
        .collect()
}

fn write_series(out: &mut Out, name: &str, series: &[EstimateSeries]) -> Result<()> {
    out.csv(name, |w| {
        writeln!(w, "eps,t,estimate,stderr")?;
        for s in series {
            s.write_rows(w)?;
        }
        Ok(())
    })
}

fn qv(r: &Resolved, seed: u64, exec: Exec, out: &mut Out) -> Result<()> {
    let spec = process_spec(r)?;
    let g = grid(r)?;
    let sched = schedule(r, &g)?;
    let times: Vec<f64> = r.list("est.times")?;
    let method: Extrapolation = r.parse("est.extrapolation")?;
    let paths = sample_paths(&spec, g, r.usize("est.paths")?, seed, exec)?;
    let series = ladder_series(&paths, &sched, &times, method, exec, |p, k, c| {
        cov_sum(paths[p].values(), paths[p].values(), k, c)
    })?;
    write_series(out, "qv.csv", &series)?;
    let declared = spec.declared_qv();
    out.csv("qv_extrapolated.csv", |w| {
        writeln!(w, "t,extrapolated,stderr,declared")?;
        for s in &series {
            let d = match declared {
                DeclaredQv::Linear(rate) => fmt17(rate * s.t),
                DeclaredQv::Infinite => "inf".to_string(),
            };
            writeln!(w, "{},{},{},{d}", fmt17(s.t), fmt17(s.extrapolated), fmt17(s.extrapolated_stderr))?;
        }
        Ok(())
    })
}

fn forward(r: &Resolved, seed: u64, exec: Exec, out: &mut Out) -> Result<()> {
    let spec = process_spec(r)?;
    let g = grid(r)?;
    let sched = schedule(r, &g)?;
    let times: Vec<f64> = r.list("est.times")?;
    let method: Extrapolation = r.parse("est.extrapolation")?;
    let f = scalar_fn(r.str("forward.integrand"))?;
    let paths = sample_paths(&spec, g, r.usize("est.paths")?, seed, exec)?;
    let ys: Vec<Vec<f64>> = paths.iter().map(|p| p.values().iter().map(|&x| f.value(x)).collect()).collect();
    let series = ladder_series(&paths, &sched, &times, method, exec, |p, k, c| {
        forward_sum(&ys[p], paths[p].values(), k, c)
    })?;
    write_series(out, "forward.csv", &series)?;
    out.csv("forward_extrapolated.csv", |w| {
        writeln!(w, "t,extrapolated,stderr")?;
        for s in &series {
            writeln!(w, "{},{},{}", fmt17(s.t), fmt17(s.extrapolated), fmt17(s.extrapolated_stderr))?;
        }
        Ok(())
    })
}

fn window_grid(r: &Resolved, g: &Grid) -> Result<WindowGrid> {
    match r.str("window.tau") {
        "full" => Ok(WindowGrid::full(g)),
        raw => WindowGrid::new(g, raw.parse().map_err(|_| Error::Config(format!("window.tau: bad value '{raw}'")))?),
    }
}

fn measure(r: &Resolved, win: WindowGrid) -> Result<SquareMeasure> {
    let mut mu = SquareMeasure::zero(win);
    let atom = r.f64("measure.atom")?;
    if atom != 0.0 {
        mu = mu.with_atom(atom);
    }
    if let Some(d) = density(r.str("measure.diag"), "measure.diag")? {
        mu = mu.with_diag(d);
    }
    match density(r.str("measure.l2"), "measure.l2")? {
        None => {}
        Some(Density::Const(c)) => mu = mu.with_l2(L2Density::constant(c)),
        Some(Density::Table(_)) => return Err(Error::Config("measure.l2 supports none or const:c".into())),
    }
    mu.validate()?;
    Ok(mu)
}

fn window_qv(r: &Resolved, seed: u64, exec: Exec, out: &mut Out) -> Result<()> {
    let spec = process_spec(r)?;
    let g = grid(r)?;
    let sched = schedule(r, &g)?;
    let times: Vec<f64> = r.list("est.times")?;
    let method: Extrapolation = r.parse("est.extrapolation")?;
    let mu = measure(r, window_grid(r, &g)?)?;
    let paths = sample_paths(&spec, g, r.usize("est.paths")?, seed, exec)?;
    let series = ladder_series(&paths, &sched, &times, method, exec, |p, k, c| chi_qv_steps(&mu, &paths[p], k, c))?;
    write_series(out, "window_qv.csv", &series)?;
    let declared = spec.declared_qv();
    out.csv("window_qv_extrapolated.csv", |w| {
        writeln!(w, "t,extrapolated,stderr,formula")?;
        for s in &series {
            let formula = match declared {
                DeclaredQv::Linear(rate) => fmt17(chi_qv_formula(&mu, &|u| rate * u, s.t)),
                DeclaredQv::Infinite => "nan".to_string(),
            };
            writeln!(w, "{},{},{},{formula}", fmt17(s.t), fmt17(s.extrapolated), fmt17(s.extrapolated_stderr))?;
        }
        Ok(())
    })
}

fn ito_check(r: &Resolved, seed: u64, exec: Exec, out: &mut Out) -> Result<()> {
    let spec = process_spec(r)?;
    let g = grid(r)?;
    let sched = schedule(r, &g)?;
    let times: Vec<f64> = r.list("est.times")?;
    let paths = sample_paths(&spec, g, r.usize("est.paths")?, seed, exec)?;
    let win = window_grid(r, &g)?;
    let name = r.str("ito.fn");
    let report = |p: &SamplePath, t: f64| -> Result<ItoReport> {
        match r.str("ito.functional") {
            "scalar" => ito_report(&c12_fn(name)?, None, p, &sched, t),
            "point" => banach_ito_report(&ElementaryFunctional::PointEval(scalar_fn(name)?), p, &win, &sched, t),
            "sqmean" => banach_ito_report(&ElementaryFunctional::SquaredMean, p, &win, &sched, t),
            "sqnorm" => banach_ito_report(&ElementaryFunctional::SquaredNorm, p, &win, &sched, t),
            other => Err(Error::Config(format!(
                "ito.functional '{other}' (expected scalar, point, sqmean or sqnorm)"
            ))),
        }
    };
    let mut reports: Vec<(usize, ItoReport)> = Vec::new();
    for &t in &times {
        let batch = exec.try_map(paths.len(), |i| report(&paths[i], t))?;
        reports.extend(batch.into_iter().enumerate());
    }
    out.csv("ito.csv", |w| {
        writeln!(w, "path_id,eps,t,lhs,time,forward,perp,second,residual,sup_residual")?;
        for (pid, rep) in &reports {
            for ((e, tm), s) in rep.eps.iter().zip(&rep.terms).zip(&rep.sup_residual) {
                writeln!(
                    w,
                    "{pid},{},{},{},{},{},{},{},{},{}",
                    fmt17(*e),
                    fmt17(rep.t),
                    fmt17(tm.lhs),
                    fmt17(tm.time),
                    fmt17(tm.forward),
                    fmt17(tm.perp),
                    fmt17(tm.second),
                    fmt17(tm.residual),
                    fmt17(*s)
                )?;
            }
        }
        Ok(())
    })?;
    out.csv("ito_summary.csv", |w| {
        writeln!(w, "eps,t,median_sup_residual,max_accounting_error")?;
        for &t in &times {
            let group: Vec<&ItoReport> = reports.iter().map(|(_, r)| r).filter(|r| r.t == t).collect();
            for (l, e) in sched.eps_values().iter().enumerate() {
                let sups: Vec<f64> = group.iter().map(|r| r.sup_residual[l]).collect();
                let acc = group.iter().fold(0.0f64, |m, r| m.max(r.terms[l].accounting_error()));
                writeln!(w, "{},{},{},{}", fmt17(*e), fmt17(t), fmt17(stats::median(&sups)), fmt17(acc))?;
            }
        }
        Ok(())
    })
}

/// `linear`, `square`, `call:K`, `digital:K` or `table:x1:y1;x2:y2;…`.
pub(crate) fn payoff(raw: &str) -> Result<Payoff> {
    let bad = || Error::Config(format!("replicate.payoff: cannot parse '{raw}'"));
    Ok(match raw {
        "linear" => Payoff::Linear,
        "square" => Payoff::Square,
        _ => {
            if let Some(k) = raw.strip_prefix("call:") {
                Payoff::Call { strike: k.parse().map_err(|_| bad())? }
            } else if let Some(k) = raw.strip_prefix("digital:") {
                Payoff::Digital { strike: k.parse().map_err(|_| bad())? }
            } else if let Some(t) = raw.strip_prefix("table:") {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for knot in t.split(';').filter(|s| !s.trim().is_empty()) {
                    let (x, y) = knot.split_once(':').ok_or_else(bad)?;
                    xs.push(x.trim().parse().map_err(|_| bad())?);
                    ys.push(y.trim().parse().map_err(|_| bad())?);
                }
                Payoff::table(xs, ys)?
            } else {
                return Err(bad());
            }
        }
    })
}

fn replicate(r: &Resolved, seed: u64, exec: Exec, out: &mut Out) -> Result<()> {
    let g = grid(r)?;
    let sigma = r.f64("replicate.sigma")?;
    let pay = payoff(r.str("replicate.payoff"))?;
    let v: Box<dyn VanillaProvider> = match r.str("replicate.solver") {
        "gauss-hermite" => Box::new(solve_vanilla(pay.clone(), sigma, g.horizon(), 64)?),
        "closed-form" => Box::new(ClosedFormSolution::new(pay.clone(), sigma, g.horizon())?),
        other => {
            return Err(Error::Config(format!(
                "replicate.solver '{other}' (expected gauss-hermite or closed-form)"
            )))
        }
    };
    let mut setup = ReplicationSetup::new(g, r.usize("replicate.paths")?, seed)?;
    setup.schedule = schedule(r, &g)?;
    setup.exec = exec;
    let fbm_scale = r.f64("replicate.fbm_scale")?;
    let k = r.f64("replicate.bifbm_k")?;
    let mut reports = Vec::new();
    for model in r.list::<String>("replicate.models")? {
        let spec = match model.as_str() {
            "bm" => ProcessSpec::brownian(sigma),
            "dirichlet" => ProcessSpec::dirichlet_default(fbm_scale).scaled(sigma),
            "bifbm" => ProcessSpec::bifractional_unit_qv(k, sigma),
            other => {
                return Err(Error::Config(format!(
                    "replicate.models: unknown model '{other}' (expected bm, dirichlet or bifbm)"
                )))
            }
        };
        let mut rep = replicate_payoff(v.as_ref(), &pay, &spec, &setup)?;
        rep.model = model.clone();
        for w in &rep.warnings {
            out.note(format!("{model}: {w}"));
        }
        reports.push(rep);
    }
    out.csv("hedge.csv", |w| {
        writeln!(w, "model,path_id,h,G0,hedge_integral,residual")?;
        for rep in &reports {
            rep.write_rows(w)?;
        }
        Ok(())
    })?;
    out.csv("replicate_summary.csv", |w| {
        writeln!(w, "model,mean_abs_residual,stderr_abs_residual,mean_residual,mean_abs_h,relative_residual,improper,qv_gate_pass_rate")?;
        for rep in &reports {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                rep.model,
                fmt17(rep.mean_abs_residual),
                fmt17(rep.stderr_abs_residual),
                fmt17(rep.mean_residual),
                fmt17(rep.mean_abs_h),
                fmt17(rep.relative_residual()),
                rep.improper,
                fmt17(rep.qv_gate_pass_rate)
            )?;
        }
        Ok(())
    })?;
    if let Some(bad) = reports.iter().find(|r| !r.mean_abs_residual.is_finite()) {
        return Err(Error::Numerical(format!("non-finite replication residual for model {}", bad.model)));
    }
    Ok(())
}

fn kolmo(r: &Resolved, seed: u64, exec: Exec, out: &mut Out) -> Result<()> {
    let d = r.usize("kolmo.dim")?;
    if d == 0 {
        return Err(Error::Config("kolmo.dim must be positive".into()));
    }
    let space = match (r.str("kolmo.a"), r.str("kolmo.q")) {
        ("heat", q) if q.starts_with("power:") => {
            let p: f64 = q["power:".len()..]
                .parse()
                .map_err(|_| Error::Config(format!("kolmo.q: bad power '{q}'")))?;
            GalerkinSpace::heat(d, p)?
        }
        (a, q) => {
            let a = if a == "heat" {
                GalerkinSpace::heat(d, 2.0)?.a().to_vec()
            } else {
                vector(a, d, "kolmo.a")?
            };
            let q = match q.strip_prefix("power:") {
                Some(p) => {
                    let p: f64 = p.parse().map_err(|_| Error::Config(format!("kolmo.q: bad power '{p}'")))?;
                    (1..=d).map(|i| (i as f64).powf(-p)).collect()
                }
                None => vector(q, d, "kolmo.q")?,
            };
            GalerkinSpace::new(a, q)?
        }
    };
    match r.str("kolmo.coeffs") {
        "ou" => {}
        "custom" => {
            return Err(Error::Config(
                "kolmo.coeffs=custom needs coefficient functions from the library API".into(),
            ))
        }
        other => return Err(Error::Config(format!("kolmo.coeffs '{other}' (expected ou)"))),
    }
    let b = vector(r.str("kolmo.b"), d, "kolmo.b")?;
    let sigma = SigmaMat::Diagonal(vector(r.str("kolmo.sigma"), d, "kolmo.sigma")?);
    let g = match r.str("kolmo.g") {
        "quad" => QuadraticG::squared_norm(d),
        "linear" => QuadraticG::linear(vec![1.0; d]),
        raw => match raw.strip_prefix("table:") {
            Some(t) => {
                let diag = semicolon_list(t, "kolmo.g")?;
                if diag.len() != d {
                    return Err(Error::Config(format!("kolmo.g: expected {d} entries")));
                }
                QuadraticG::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)), vec![0.0; d])?
            }
            None => return Err(Error::Config(format!("kolmo.g '{raw}' (expected quad, linear or table:...)"))),
        },
    };
    let eta = match r.str("kolmo.eta") {
        "harmonic" => (1..=d).map(|i| 1.0 / i as f64).collect(),
        "zero" => vec![0.0; d],
        raw => vector(raw, d, "kolmo.eta")?,
    };
    let s = r.f64("kolmo.s")?;
    let ou = OuQuadratic::new(space.clone(), b.clone(), sigma.clone(), g.clone())?;
    let problem = KolmoProblem {
        space,
        coeffs: Coeffs::constant(b, sigma)?,
        g,
        s,
        eta: eta.clone(),
        steps: r.usize("kolmo.steps")?,
        scheme: r.parse::<Scheme>("kolmo.scheme")?,
    };
    problem.validate(s)?;
    let oracle = ou_oracle(&ou, s, &eta);
    let tolerance = r.f64("kolmo.nan_tolerance")?;
    let mut rows = Vec::new();
    let mut worst_nan: f64 = 0.0;
    for m in r.list::<usize>("kolmo.paths")? {
        let est = kolmogorov_mc(&problem, m, seed, exec)?;
        worst_nan = worst_nan.max(est.nan_paths as f64 / m as f64);
        rows.push((m, est));
    }
    out.csv("kolmo.csv", |w| {
        writeln!(w, "m,V_hat,stderr,oracle,rel_err")?;
        for (m, est) in &rows {
            let rel = (est.v_hat - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);
            writeln!(w, "{m},{},{},{},{}", fmt17(est.v_hat), fmt17(est.stderr), fmt17(oracle), fmt17(rel))?;
        }
        Ok(())
    })?;
    if r.str("kolmo.dt_ladder") != "none" {
        let ladder: Vec<usize> = r.list("kolmo.dt_ladder")?;
        let rep = decomposition_check(&ou, s, &eta, &ladder, r.usize("kolmo.decomp_paths")?, seed, exec)?;
        out.csv("decomposition.csv", |w| rep.write_csv(w))?;
        out.csv("decomposition_summary.csv", |w| {
            writeln!(w, "integral_mean,integral_stderr,integral_variance,isometry_variance")?;
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(rep.integral_mean),
                fmt17(rep.integral_stderr),
                fmt17(rep.integral_variance),
                fmt17(rep.isometry_variance)
            )?;
            Ok(())
        })?;
    }
    if worst_nan > tolerance {
        return Err(Error::Numerical(format!(
            "{:.2}% of Monte Carlo paths were non-finite (tolerance {:.2}%)",
            100.0 * worst_nan,
            100.0 * tolerance
        )));
    }
    Ok(())
}

/// Fast smoke checks of every module at reduced size.
fn selftest(seed: u64, exec: Exec, out: &mut Out) -> Result<()> {
    let mut checks: Vec<(&str, f64, f64, bool)> = Vec::new();

    let g = Grid::new(1.0, 1024)?;
    let sched = EpsSchedule::default_for(&g)?;
    let bm = sample_paths(&ProcessSpec::brownian(1.0), g, 50, seed, exec)?;
    let s = &ladder_series(&bm, &sched, &[1.0], Extrapolation::default(), exec, |p, k, c| {
        cov_sum(bm[p].values(), bm[p].values(), k, c)
    })?[0];
    let err = (s.extrapolated - 1.0).abs();
    checks.push(("bm_qv_abs_error", err, 0.05, err <= 0.05));

    let fbm = sample_paths(&ProcessSpec::fbm(0.75), g, 20, seed, exec)?;
    let s = &ladder_series(&fbm, &sched, &[1.0], Extrapolation::default(), exec, |p, k, c| {
        cov_sum(fbm[p].values(), fbm[p].values(), k, c)
    })?[0];
    checks.push(("fbm075_qv", s.extrapolated, 0.05, s.extrapolated.abs() <= 0.05));

    let rep = ito_report(&C12Fn::Affine { a: 1.0, b: 2.0, c: -0.5 }, None, &bm[0], &sched, 0.5)?;
    let affine = rep.final_residual();
    checks.push(("affine_ito_residual", affine, 1e-12, affine <= 1e-12));

    let mut rng = path_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let t = DMatrix::from_fn(6, 6, |_, _| rand::Rng::random::<f64>(&mut rng) - 0.5);
        let b = trace_and_bounds(&OperatorMat::nuclear(t.clone())?)?;
        if !b.holds {
            worst = f64::INFINITY;
        }
        worst = worst.max(hs_identity_check(&t) / t.norm_squared().max(1.0));
        let u = DMatrix::from_fn(6, 6, |_, _| rand::Rng::random::<f64>(&mut rng) - 0.5);
        let brute = (&u * t.transpose()).trace();
        worst = worst.max((pairing_trace(&u, &t)? - brute).abs() / brute.abs().max(1.0));
    }
    checks.push(("operator_algebra", worst, 1e-10, worst <= 1e-10));

    let space = GalerkinSpace::heat(4, 2.0)?;
    let ou = OuQuadratic::new(space, vec![1.0; 4], SigmaMat::identity(4), QuadraticG::squared_norm(4))?;
    let eta = vec![0.5; 4];
    let est = kolmogorov_mc(&ou.problem(0.5, eta.clone(), 8)?, 20_000, seed, exec)?;
    let z = (est.v_hat - ou_oracle(&ou, 0.5, &eta)).abs() / est.stderr;
    checks.push(("kolmo_oracle_z", z, 4.0, z <= 4.0));

    out.csv("selftest.csv", |w| {
        writeln!(w, "check,value,threshold,pass")?;
        for (name, v, thr, pass) in &checks {
            writeln!(w, "{name},{},{},{pass}", fmt17(*v), fmt17(*thr))?;
        }
        Ok(())
    })?;
    for (name, v, thr, pass) in &checks {
        out.note(format!("{} {name}: {v:.3e} (threshold {thr:.1e})", if *pass { "PASS" } else { "FAIL" }));
    }
    if let Some((name, ..)) = checks.iter().find(|c| !c.3) {
        return Err(Error::Numerical(format!("selftest check '{name}' failed")));
    }
    Ok(())
}

pub(crate) const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots every CSV in this directory. Usage: python3 plot.py [dir]"""
import csv
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows


def plot_file(path):
    rows = load(path)
    if not rows:
        return
    cols = list(rows[0].keys())
    fig, ax = plt.subplots(figsize=(6, 4))
    if "eps" in cols and "estimate" in cols:
        for t in sorted({r["t"] for r in rows}, key=float):
            sel = [r for r in rows if r["t"] == t]
            ax.errorbar([float(r["eps"]) for r in sel], [float(r["estimate"]) for r in sel],
                        yerr=[float(r["stderr"]) for r in sel], marker="o", label=f"t={float(t):g}")
        ax.set_xscale("log")
        ax.set_xlabel("eps")
        ax.legend()
    elif "m" in cols and "rel_err" in cols:
        ax.loglog([float(r["m"]) for r in rows], [float(r["rel_err"]) for r in rows], "o-")
        ax.set_xlabel("paths")
        ax.set_ylabel("relative error")
    elif "residual" in cols and "path_id" in cols:
        ax.hist([float(r["residual"]) for r in rows], bins=40)
        ax.set_xlabel("residual")
    elif "path_id" in cols and "x" in cols:
        for pid in sorted({r["path_id"] for r in rows}, key=int):
            sel = [r for r in rows if r["path_id"] == pid]
            ax.plot([float(r["t"]) for r in sel], [float(r["x"]) for r in sel], lw=0.8)
        ax.set_xlabel("t")
    else:
        xs = [float(r[cols[0]]) for r in rows]
        for c in cols[1:]:
            try:
                ax.plot(xs, [float(r[c]) for r in rows], "o-", label=c)
            except ValueError:
                pass
        ax.set_xlabel(cols[0])
        ax.legend()
    ax.set_title(path.name)
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)


def main():
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent)
    for path in sorted(root.glob("*.csv")):
        plot_file(path)


if __name__ == "__main__":
    main()
"#;
