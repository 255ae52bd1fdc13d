//! Flat `section.key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! model.r = 2
//! model.b1 = 0
//! law0.kind = gaussian
//! law0.mean = 1
//! law0.sd = 0.5
//! sim.seed = 7
//! ```
//!
//! Every key must be known and appear at most once; numbers parse strictly.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use dmfg_core::fixed_point::TerminalCondition;
use dmfg_core::model::Coefficients;
use dmfg_core::sim::InitialLaw;
use dmfg_core::LQModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.path, self.message)
        } else {
            write!(f, "{}:{}:{}: {}", self.path, self.line, self.column, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawSpec {
    Dirac(f64),
    Gaussian { mean: f64, sd: f64 },
    Empirical(Vec<f64>),
}

impl LawSpec {
    pub fn to_law(&self) -> dmfg_core::Result<InitialLaw> {
        match self {
            Self::Dirac(x) => InitialLaw::dirac(*x),
            Self::Gaussian { mean, sd } => InitialLaw::gaussian(*mean, *sd),
            Self::Empirical(s) => InitialLaw::empirical(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub n_particles: usize,
    pub seed: u64,
    /// Start of the representative player whose cost is reported.
    pub x0: f64,
    /// Population summary every this many steps.
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSection {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub dx: f64,
    pub terminal: TerminalCondition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySection {
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Time-node stride of `field.csv`.
    pub field_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub coefficients: Coefficients,
    pub law0: LawSpec,
    pub sim: SimConfig,
    pub fixed_point: FixedPointSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

impl RunConfig {
    /// The validated model, or the reason it is invalid.
    pub fn model(&self) -> dmfg_core::Result<LQModel> {
        LQModel::new(self.coefficients)
    }
}

const KEYS: &[&str] = &[
    "model.r",
    "model.b1",
    "model.b2",
    "model.b3",
    "model.b4",
    "model.A",
    "model.C",
    "law0.kind",
    "law0.x0",
    "law0.mean",
    "law0.sd",
    "law0.samples",
    "sim.T",
    "sim.dt",
    "sim.n_paths",
    "sim.n_particles",
    "sim.seed",
    "sim.x0",
    "sim.record_every",
    "fixed_point.damping",
    "fixed_point.tol",
    "fixed_point.max_iter",
    "fixed_point.x_lo",
    "fixed_point.x_hi",
    "fixed_point.dx",
    "fixed_point.terminal",
    "verify.offsets",
    "output.dir",
    "output.field_stride",
];

const REQUIRED: &[&str] = &[
    "model.r", "model.b1", "model.b2", "model.b3", "model.b4", "model.A", "model.C",
];

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

struct Parser {
    path: String,
    entries: HashMap<String, Entry>,
}

impl Parser {
    fn err(&self, line: usize, column: usize, message: String) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line,
            column,
            message,
        }
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        match e.value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(self.err(e.line, e.column, format!("invalid number '{}' for {key}", e.value))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64_opt(key)?
            .ok_or_else(|| self.err(0, 0, format!("missing required key {key}")))
    }

    fn uint_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(default) };
        e.value.parse::<T>().map_err(|_| {
            self.err(
                e.line,
                e.column,
                format!("invalid non-negative integer '{}' for {key}", e.value),
            )
        })
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let mut out = Vec::new();
        let mut col = e.column;
        for item in e.value.split(',') {
            let trimmed = item.trim();
            let lead = item.len() - item.trim_start().len();
            match trimmed.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => return Err(self.err(e.line, col + lead, format!("invalid number '{trimmed}' in list {key}"))),
            }
            col += item.len() + 1;
        }
        Ok(Some(out))
    }
}

/// Parses configuration text; `origin` names the source in diagnostics.
pub fn parse(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    let mut p = Parser {
        path: origin.to_string(),
        entries: HashMap::new(),
    };
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw_line.trim_start();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let indent = raw_line.len() - body.len();
        let Some(eq) = body.find('=') else {
            return Err(p.err(line, indent + 1, "expected 'key = value'".into()));
        };
        let key = body[..eq].trim();
        let after = &body[eq + 1..];
        let after = after.find('#').map_or(after, |c| &after[..c]);
        let value = after.trim();
        let value_col = indent + eq + 1 + (after.len() - after.trim_start().len()) + 1;
        if key.is_empty() {
            return Err(p.err(line, indent + 1, "empty key".into()));
        }
        if !KEYS.contains(&key) {
            return Err(p.err(line, indent + 1, format!("unknown key '{key}'")));
        }
        if value.is_empty() {
            return Err(p.err(line, value_col, format!("empty value for {key}")));
        }
        if let Some(prev) = p.entries.get(key) {
            return Err(p.err(
                line,
                indent + 1,
                format!("duplicate key '{key}' (first set on line {})", prev.line),
            ));
        }
        p.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
                column: value_col,
            },
        );
    }
    for key in REQUIRED {
        p.f64_req(key)?;
    }

    let coefficients = Coefficients {
        r: p.f64_req("model.r")?,
        b1: p.f64_req("model.b1")?,
        b2: p.f64_req("model.b2")?,
        b3: p.f64_req("model.b3")?,
        b4: p.f64_req("model.b4")?,
        state_cost: p.f64_req("model.A")?,
        control_cost: p.f64_req("model.C")?,
    };

    let law_keys = ["law0.x0", "law0.mean", "law0.sd", "law0.samples"];
    let kind = p.raw("law0.kind").map(|e| e.value.as_str()).unwrap_or("dirac");
    let allowed: &[&str] = match kind {
        "dirac" => &["law0.x0"],
        "gaussian" => &["law0.mean", "law0.sd"],
        "empirical" => &["law0.samples"],
        other => {
            let e = p.raw("law0.kind").expect("kind was read from an entry");
            return Err(p.err(
                e.line,
                e.column,
                format!("unknown law0.kind '{other}' (expected dirac, gaussian or empirical)"),
            ));
        }
    };
    for key in law_keys {
        if let (Some(e), false) = (p.raw(key), allowed.contains(&key)) {
            return Err(p.err(e.line, e.column, format!("{key} does not apply to law0.kind = {kind}")));
        }
    }
    let law0 = match kind {
        "dirac" => LawSpec::Dirac(p.f64_or("law0.x0", 0.0)?),
        "gaussian" => {
            let sd = p.f64_or("law0.sd", 1.0)?;
            if sd < 0.0 {
                let e = p.raw("law0.sd").expect("negative sd was read from an entry");
                return Err(p.err(e.line, e.column, format!("law0.sd must be >= 0, got {sd}")));
            }
            LawSpec::Gaussian {
                mean: p.f64_or("law0.mean", 0.0)?,
                sd,
            }
        }
        _ => match p.list("law0.samples")? {
            Some(s) => LawSpec::Empirical(s),
            None => return Err(p.err(0, 0, "law0.kind = empirical needs law0.samples".into())),
        },
    };

    let positive = |key: &str, v: f64| -> Result<f64, ConfigError> {
        if v > 0.0 {
            Ok(v)
        } else {
            let (line, column) = p.raw(key).map(|e| (e.line, e.column)).unwrap_or((0, 0));
            Err(p.err(line, column, format!("{key} must be positive, got {v}")))
        }
    };

    let sim = SimConfig {
        horizon: positive("sim.T", p.f64_or("sim.T", 6.0)?)?,
        dt: positive("sim.dt", p.f64_or("sim.dt", 1e-3)?)?,
        n_paths: p.uint_or("sim.n_paths", 10_000usize)?,
        n_particles: p.uint_or("sim.n_particles", 10_000usize)?,
        seed: p.uint_or("sim.seed", 0u64)?,
        x0: p.f64_or("sim.x0", 0.0)?,
        record_every: p.uint_or("sim.record_every", 10usize)?.max(1),
    };

    let terminal = match p.raw("fixed_point.terminal").map(|e| e.value.as_str()) {
        None | Some("stationary") => TerminalCondition::Stationary,
        Some("zero") => TerminalCondition::Zero,
        Some(other) => {
            let e = p.raw("fixed_point.terminal").expect("terminal was read from an entry");
            return Err(p.err(
                e.line,
                e.column,
                format!("unknown fixed_point.terminal '{other}' (expected stationary or zero)"),
            ));
        }
    };
    let fixed_point = FixedPointSection {
        damping: p.f64_or("fixed_point.damping", 0.5)?,
        tol: positive("fixed_point.tol", p.f64_or("fixed_point.tol", 1e-3)?)?,
        max_iter: p.uint_or("fixed_point.max_iter", 50usize)?,
        x_lo: p.f64_opt("fixed_point.x_lo")?,
        x_hi: p.f64_opt("fixed_point.x_hi")?,
        dx: positive("fixed_point.dx", p.f64_or("fixed_point.dx", 0.05)?)?,
        terminal,
    };
    if !(fixed_point.damping > 0.0 && fixed_point.damping <= 1.0) {
        let (line, column) = p
            .raw("fixed_point.damping")
            .map(|e| (e.line, e.column))
            .unwrap_or((0, 0));
        return Err(p.err(
            line,
            column,
            format!("fixed_point.damping must lie in (0, 1], got {}", fixed_point.damping),
        ));
    }

    let verify = VerifySection {
        offsets: p.list("verify.offsets")?.unwrap_or_else(|| vec![0.25, 0.5, 1.0]),
    };
    let output = OutputSection {
        dir: PathBuf::from(p.raw("output.dir").map(|e| e.value.as_str()).unwrap_or("out")),
        field_stride: p.uint_or("output.field_stride", 100usize)?.max(1),
    };

    Ok(RunConfig {
        coefficients,
        law0,
        sim,
        fixed_point,
        verify,
        output,
    })
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let origin = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| ConfigError {
        path: origin.clone(),
        line: 0,
        column: 0,
        message: format!("cannot read config: {e}"),
    })?;
    let text = String::from_utf8(bytes).map_err(|_| ConfigError {
        path: origin.clone(),
        line: 0,
        column: 0,
        message: "config is not valid UTF-8".into(),
    })?;
    parse(&text, &origin)
}
