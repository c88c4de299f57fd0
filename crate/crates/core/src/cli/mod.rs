//! Command-line driver.
//!
//! Every subcommand resolves a flat config (defaults, then `--config` file,
//! then subcommand flags, then global flags and `--set` overrides), writes
//! its CSVs plus `manifest.ini` and `plot.py` into `--out`, and exits with
//! 0 on success, 2 on bad input and 3 on a numerical failure.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::RunSummary;
pub use config::{resolve, ExperimentConfig, Resolved};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "stochreg", version, about = "Stochastic calculus via regularization on sampled paths")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment config file (`key=value` lines, optional `[section]`s).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `KEY=VALUE` override; may repeat.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ProcessArgs {
    /// bm, fbm, bifbm, bifbm-unit or dirichlet.
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    hurst: Option<f64>,
    /// Bifractional K.
    #[arg(long)]
    k: Option<f64>,
    /// Scale of the fBm part of the Dirichlet process.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct EstArgs {
    #[arg(long)]
    paths: Option<usize>,
    /// Comma-separated evaluation times.
    #[arg(long, visible_alias = "t")]
    times: Option<String>,
    /// Comma-separated ε multiples of dt.
    #[arg(long)]
    eps_ladder: Option<String>,
    /// finest, linear3 or richardson3.
    #[arg(long)]
    extrapolation: Option<String>,
}

#[derive(Args, Debug, Default)]
struct WindowArgs {
    /// Window width, or `full` for the whole horizon.
    #[arg(long)]
    tau: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample paths and write them to paths.csv.
    Simulate {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// ε-quadratic variation along an ε ladder.
    Qv {
        #[command(flatten)]
        process: ProcessArgs,
        #[command(flatten)]
        est: EstArgs,
    },
    /// Forward integral of f(X) against X.
    Forward {
        #[command(flatten)]
        process: ProcessArgs,
        #[command(flatten)]
        est: EstArgs,
        /// identity, square, half-square, sine or exp.
        #[arg(long)]
        integrand: Option<String>,
    },
    /// χ-quadratic variation of the window process.
    WindowQv {
        #[command(flatten)]
        process: ProcessArgs,
        #[command(flatten)]
        est: EstArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        atom: Option<f64>,
        /// none, const:c or table:v0;v1;...
        #[arg(long)]
        diag: Option<String>,
        /// none or const:c.
        #[arg(long)]
        l2: Option<String>,
    },
    /// Itô formula residuals, scalar or window functionals.
    ItoCheck {
        #[command(flatten)]
        process: ProcessArgs,
        #[command(flatten)]
        est: EstArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// scalar, point, sqmean or sqnorm.
        #[arg(long)]
        functional: Option<String>,
        /// Function name for scalar/point functionals.
        #[arg(long = "fn")]
        func: Option<String>,
    },
    /// Hedge a payoff along paths of several models.
    Replicate {
        /// linear, square, call:K, digital:K or table:x1:y1;x2:y2;...
        #[arg(long)]
        payoff: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Comma-separated subset of bm, dirichlet, bifbm.
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        /// gauss-hermite or closed-form.
        #[arg(long)]
        solver: Option<String>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        eps_ladder: Option<String>,
    },
    /// Galerkin Kolmogorov Monte Carlo against the OU-quadratic oracle.
    Kolmo {
        #[arg(long)]
        dim: Option<usize>,
        /// `heat` or table:a1;...;ad (eigenvalues of A, all <= 0).
        #[arg(long)]
        a: Option<String>,
        /// power:p or table:q1;...;qd.
        #[arg(long)]
        q: Option<String>,
        /// Only `ou` is available from the command line.
        #[arg(long)]
        coeffs: Option<String>,
        /// quad, linear or table:g1;...;gd (diagonal of G).
        #[arg(long)]
        g: Option<String>,
        /// Comma-separated path counts.
        #[arg(long)]
        paths: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        s: Option<f64>,
        /// const:c or table:v1;...;vd
        #[arg(long)]
        b: Option<String>,
        /// exp-integrator or exp-euler.
        #[arg(long)]
        scheme: Option<String>,
        /// Comma-separated step counts for the decomposition check.
        #[arg(long)]
        dt_ladder: Option<String>,
    },
    /// Quick checks of every module.
    Selftest,
    /// Run whatever `run.command` the config names.
    Run,
}

fn put<T: ToString>(cfg: &mut ExperimentConfig, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        cfg.set(key, v.to_string());
    }
}

impl ProcessArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        put(cfg, "process.kind", &self.process);
        put(cfg, "process.sigma", &self.sigma);
        put(cfg, "process.hurst", &self.hurst);
        put(cfg, "process.k", &self.k);
        put(cfg, "process.scale", &self.scale);
        put(cfg, "grid.horizon", &self.horizon);
        put(cfg, "grid.steps", &self.steps);
    }
}

impl EstArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        put(cfg, "est.paths", &self.paths);
        put(cfg, "est.times", &self.times);
        put(cfg, "est.eps_ladder", &self.eps_ladder);
        put(cfg, "est.extrapolation", &self.extrapolation);
    }
}

impl Command {
    fn name(&self) -> Option<&'static str> {
        Some(match self {
            Command::Simulate { .. } => "simulate",
            Command::Qv { .. } => "qv",
            Command::Forward { .. } => "forward",
            Command::WindowQv { .. } => "window-qv",
            Command::ItoCheck { .. } => "ito-check",
            Command::Replicate { .. } => "replicate",
            Command::Kolmo { .. } => "kolmo",
            Command::Selftest => "selftest",
            Command::Run => return None,
        })
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        match self {
            Command::Simulate { process, paths } => {
                process.apply(cfg);
                put(cfg, "simulate.paths", paths);
            }
            Command::Qv { process, est } => {
                process.apply(cfg);
                est.apply(cfg);
            }
            Command::Forward { process, est, integrand } => {
                process.apply(cfg);
                est.apply(cfg);
                put(cfg, "forward.integrand", integrand);
            }
            Command::WindowQv {
                process,
                est,
                window,
                atom,
                diag,
                l2,
            } => {
                process.apply(cfg);
                est.apply(cfg);
                put(cfg, "window.tau", &window.tau);
                put(cfg, "measure.atom", atom);
                put(cfg, "measure.diag", diag);
                put(cfg, "measure.l2", l2);
            }
            Command::ItoCheck {
                process,
                est,
                window,
                functional,
                func,
            } => {
                process.apply(cfg);
                est.apply(cfg);
                put(cfg, "window.tau", &window.tau);
                put(cfg, "ito.functional", functional);
                put(cfg, "ito.fn", func);
            }
            Command::Replicate {
                payoff,
                sigma,
                models,
                paths,
                solver,
                horizon,
                steps,
                eps_ladder,
            } => {
                put(cfg, "replicate.payoff", payoff);
                put(cfg, "replicate.sigma", sigma);
                put(cfg, "replicate.models", models);
                put(cfg, "replicate.paths", paths);
                put(cfg, "replicate.solver", solver);
                put(cfg, "grid.horizon", horizon);
                put(cfg, "grid.steps", steps);
                put(cfg, "est.eps_ladder", eps_ladder);
            }
            Command::Kolmo {
                dim,
                a,
                q,
                coeffs,
                g,
                paths,
                steps,
                s,
                b,
                scheme,
                dt_ladder,
            } => {
                put(cfg, "kolmo.dim", dim);
                put(cfg, "kolmo.a", a);
                put(cfg, "kolmo.q", q);
                put(cfg, "kolmo.coeffs", coeffs);
                put(cfg, "kolmo.g", g);
                put(cfg, "kolmo.paths", paths);
                put(cfg, "kolmo.steps", steps);
                put(cfg, "kolmo.s", s);
                put(cfg, "kolmo.b", b);
                put(cfg, "kolmo.scheme", scheme);
                put(cfg, "kolmo.dt_ladder", dt_ladder);
            }
            Command::Selftest | Command::Run => {}
        }
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Numerical(_) | Error::NotPositiveDefinite { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

/// Resolves and runs a config, writing outputs, manifest and plot script
/// into `run.out`.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let resolved = resolve(cfg)?;
    crate::exec::set_threads(resolved.usize("run.threads")?);
    let dir = PathBuf::from(resolved.str("run.out"));
    std::fs::create_dir_all(&dir)?;
    write_support_files(&resolved, &dir)?;
    commands::dispatch(&resolved, &dir)
}

fn write_support_files(r: &Resolved, dir: &Path) -> Result<()> {
    std::fs::write(dir.join("manifest.ini"), r.to_manifest())?;
    std::fs::write(dir.join("plot.py"), commands::PLOT_SCRIPT)?;
    Ok(())
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::new(),
    };
    match cli.command.name() {
        Some(name) => {
            if let Some(existing) = cfg.get("run.command") {
                if existing != name {
                    return Err(Error::Config(format!(
                        "config file is for '{existing}' but the subcommand is '{name}'"
                    )));
                }
            }
            cfg.set("run.command", name);
        }
        None if cfg.get("run.command").is_none() && cli.config.is_none() => {
            return Err(Error::Config("`run` needs --config with run.command".into()));
        }
        None => {}
    }
    cli.command.apply(&mut cfg);
    put(&mut cfg, "run.seed", &cli.seed);
    put(&mut cfg, "run.threads", &cli.threads);
    put(&mut cfg, "run.out", &cli.out.as_ref().map(|p| p.display().to_string()));
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

/// Parses `args` (including the program name), runs and returns the exit
/// code. Diagnostics go to stderr, a one-line summary to stdout.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = build_config(&cli).and_then(|cfg| run_config(&cfg));
    match outcome {
        Ok(summary) => {
            for note in &summary.notes {
                eprintln!("{note}");
            }
            println!("wrote {} to {}", summary.files.join(", "), summary.out_dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_for(args: &[&str]) -> ExperimentConfig {
        let cli = Cli::try_parse_from(std::iter::once("stochreg").chain(args.iter().copied())).unwrap();
        build_config(&cli).unwrap()
    }

    #[test]
    fn flags_land_in_config() {
        let cfg = cfg_for(&["qv", "--process", "fbm", "--hurst", "0.6", "--eps-ladder", "8,4,2", "--seed", "7"]);
        let r = resolve(&cfg).unwrap();
        assert_eq!(r.command(), "qv");
        assert_eq!(r.f64("process.hurst").unwrap(), 0.6);
        assert_eq!(r.list::<usize>("est.eps_ladder").unwrap(), vec![8, 4, 2]);
        assert_eq!(r.parse::<u64>("run.seed").unwrap(), 7);
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cfg = cfg_for(&["kolmo", "--dim", "4", "--threads", "1", "--set", "kolmo.s=0.25"]);
        assert_eq!(cfg.get("run.threads"), Some("1"));
        assert_eq!(cfg.get("kolmo.s"), Some("0.25"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_INPUT);
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
        assert_eq!(main_with_args(["stochreg", "bogus"]), EXIT_INPUT);
        assert_eq!(main_with_args(["stochreg", "run"]), EXIT_INPUT);
    }
}
