//! Flat `section.key=value` experiment configs.
//!
//! A file may also group keys under `[section]` headers; `key=value` lines
//! below a header are read as `section.key`. Lines starting with `#` or `;`
//! are comments. Resolution fills defaults from the command schema, rejects
//! unknown keys and reports the first missing required key.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            if cfg.values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    /// `key=value` override from the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got '{pair}'")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

/// One schema entry; `default = None` marks a required key.
#[derive(Clone, Copy, Debug)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: Option<&'static str>,
}

const fn req(key: &'static str) -> KeySpec {
    KeySpec { key, default: None }
}

const fn opt(key: &'static str, default: &'static str) -> KeySpec {
    KeySpec {
        key,
        default: Some(default),
    }
}

pub const COMMANDS: &[&str] = &["simulate", "qv", "forward", "window-qv", "ito-check", "replicate", "kolmo", "selftest"];

const RUN: &[KeySpec] = &[req("run.command"), opt("run.seed", "42"), opt("run.threads", "0"), opt("run.out", "out")];

const PROCESS: &[KeySpec] = &[
    req("process.kind"),
    opt("process.sigma", "1"),
    opt("process.hurst", "0.75"),
    opt("process.k", "0.8"),
    opt("process.scale", "0.5"),
];

const GRID: &[KeySpec] = &[opt("grid.horizon", "1"), opt("grid.steps", "1024")];

const EST: &[KeySpec] = &[
    opt("est.paths", "100"),
    opt("est.times", "1"),
    opt("est.eps_ladder", "64,32,16,8,4,2"),
    opt("est.extrapolation", "richardson3"),
];

const SIMULATE: &[KeySpec] = &[opt("simulate.paths", "4")];
const FORWARD: &[KeySpec] = &[opt("forward.integrand", "identity")];
const WINDOW: &[KeySpec] = &[
    opt("window.tau", "full"),
    opt("measure.atom", "0"),
    opt("measure.diag", "none"),
    opt("measure.l2", "none"),
];
const ITO: &[KeySpec] = &[opt("ito.functional", "point"), opt("ito.fn", "square"), opt("window.tau", "full")];
const REPLICATE: &[KeySpec] = &[
    req("replicate.payoff"),
    opt("replicate.sigma", "1"),
    opt("replicate.models", "bm,dirichlet,bifbm"),
    opt("replicate.paths", "200"),
    opt("replicate.solver", "gauss-hermite"),
    opt("replicate.fbm_scale", "0.5"),
    opt("replicate.bifbm_k", "0.8"),
    opt("est.eps_ladder", "64,32,16,8,4,2"),
];
const KOLMO: &[KeySpec] = &[
    opt("kolmo.dim", "16"),
    opt("kolmo.a", "heat"),
    opt("kolmo.q", "power:2"),
    opt("kolmo.coeffs", "ou"),
    opt("kolmo.b", "const:0"),
    opt("kolmo.sigma", "const:1"),
    opt("kolmo.g", "quad"),
    opt("kolmo.s", "0.5"),
    opt("kolmo.eta", "harmonic"),
    opt("kolmo.paths", "1000,10000"),
    opt("kolmo.steps", "16"),
    opt("kolmo.scheme", "exp-integrator"),
    opt("kolmo.dt_ladder", "none"),
    opt("kolmo.decomp_paths", "1000"),
    opt("kolmo.nan_tolerance", "0.01"),
];

/// Schema sections for a command, in resolution order.
pub fn schema_for(command: &str) -> Result<Vec<&'static [KeySpec]>> {
    let parts: Vec<&'static [KeySpec]> = match command {
        "simulate" => vec![PROCESS, GRID, SIMULATE],
        "qv" => vec![PROCESS, GRID, EST],
        "forward" => vec![PROCESS, GRID, EST, FORWARD],
        "window-qv" => vec![PROCESS, GRID, EST, WINDOW],
        "ito-check" => vec![PROCESS, GRID, EST, ITO],
        "replicate" => vec![GRID, REPLICATE],
        "kolmo" => vec![KOLMO],
        "selftest" => vec![],
        other => {
            return Err(Error::Config(format!(
                "unknown command '{other}' (expected one of {})",
                COMMANDS.join(", ")
            )))
        }
    };
    Ok(std::iter::once(RUN).chain(parts).collect())
}

/// A config with every key of its command present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolved {
    values: BTreeMap<String, String>,
}

pub fn resolve(cfg: &ExperimentConfig) -> Result<Resolved> {
    let command = cfg
        .get("run.command")
        .ok_or_else(|| Error::Config("missing required key 'run.command'".into()))?;
    let schema = schema_for(command)?;
    let known: Vec<&str> = schema.iter().flat_map(|s| s.iter().map(|k| k.key)).collect();
    if let Some(unknown) = cfg.keys().find(|k| !known.contains(k)) {
        return Err(Error::Config(format!("unknown key '{unknown}' for command '{command}'")));
    }
    let mut values = BTreeMap::new();
    for spec in schema.iter().flat_map(|s| s.iter()) {
        let v = match (cfg.get(spec.key), spec.default) {
            (Some(v), _) => v.to_string(),
            (None, Some(d)) => d.to_string(),
            (None, None) => return Err(Error::Config(format!("missing required key '{}'", spec.key))),
        };
        values.insert(spec.key.to_string(), v);
    }
    Ok(Resolved { values })
}

impl Resolved {
    pub fn command(&self) -> &str {
        self.str("run.command")
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key '{key}' is not in the resolved schema"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.str(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{raw}'")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parse(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key)
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        parse_list(self.str(key)).map_err(|_| Error::Config(format!("key '{key}': bad list '{}'", self.str(key))))
    }

    /// The resolved config as a manifest that [`ExperimentConfig::parse`]
    /// reads back unchanged.
    pub fn to_manifest(&self) -> String {
        let mut out = String::from("# stochreg manifest: fully resolved experiment config\n");
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

pub(crate) fn parse_list<T: FromStr>(raw: &str) -> std::result::Result<Vec<T>, ()> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(());
    }
    items.iter().map(|s| s.parse().map_err(|_| ())).collect()
}
