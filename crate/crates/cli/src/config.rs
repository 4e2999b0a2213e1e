//! Problem configuration: a versioned JSON document, parsed into typed
//! structs and then validated field by field.
//!
//! Every error carries the line and column of the offending key, either from
//! the JSON parser or by locating the key path in the source text.

use fenchelkit::discretize::{ConstraintSet, Grid, ScalarField};
use fenchelkit::energy::EnergyError;
use fenchelkit::expr::Expr;
use fenchelkit::solver::{Problem, Schedule, Tolerances};
use fenchelkit::{make_energy, CoefficientField, EnergyDensity, Vec2N};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA: &str = "fenchelkit.config/1";

/// Example configs shipped with the binary, addressable as `bundled:NAME`.
pub const BUNDLED: [(&str, &str); 4] = [
    ("quad_1d_unconstrained", include_str!("../configs/quad_1d_unconstrained.json")),
    ("quad_1d_obstacle", include_str!("../configs/quad_1d_obstacle.json")),
    ("zero_boundary_2d", include_str!("../configs/zero_boundary_2d.json")),
    ("double_phase_2d", include_str!("../configs/double_phase_2d.json")),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.source_name, self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: String,
    pub energy: EnergySpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub constraint: Option<ConstraintSpec>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub comparison: ComparisonSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub conjugate: Option<ConjugateSpec>,
    #[serde(default)]
    pub certify: CertifySpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub coefficients: BTreeMap<String, CoefficientSpec>,
}

/// A coefficient: a number, an expression with declared bounds, or node
/// samples on a uniform grid with declared bounds.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Expression { expr: String, min: f64, max: f64 },
    Samples { samples: Vec<f64>, cells: usize, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKindSpec {
    Unconstrained,
    Obstacle,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub kind: ConstraintKindSpec,
    /// Boundary data u₀ as an expression in x1, x2.
    pub boundary: String,
    #[serde(default)]
    pub obstacle: Option<String>,
}

/// Either explicit `k`/`eps` lists or a geometric ladder.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub k: Option<Vec<f64>>,
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default = "default_k0")]
    pub k0: f64,
    #[serde(default = "default_growth")]
    pub growth: f64,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default)]
    pub stop_early: Option<bool>,
    #[serde(default)]
    pub min_stages: Option<usize>,
}

fn default_k0() -> f64 {
    1.0
}
fn default_growth() -> f64 {
    2.0
}
fn default_stages() -> usize {
    8
}
fn default_eps0() -> f64 {
    1e-10
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            k: None,
            eps: None,
            k0: default_k0(),
            growth: default_growth(),
            stages: default_stages(),
            eps0: default_eps0(),
            stop_early: None,
            min_stages: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    /// `"auto"` or an expression.
    #[serde(default = "default_w0")]
    pub w0: String,
    #[serde(default = "default_t")]
    pub t: f64,
}

fn default_w0() -> String {
    "auto".into()
}
fn default_t() -> f64 {
    2.0
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        Self { w0: default_w0(), t: default_t() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub fields: Vec<FieldFormat>,
}

fn default_formats() -> Vec<FieldFormat> {
    vec![FieldFormat::Csv, FieldFormat::Binary]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, fields: default_formats() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateSpec {
    pub x: Vec<f64>,
    /// Query file, relative to the config file.
    #[serde(default)]
    pub queries: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleLevel {
    #[default]
    Full,
    Quick,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default)]
    pub samples: SampleLevel,
    #[serde(default)]
    pub k: Option<f64>,
}

/// A parsed config together with its source text, for locating errors.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProblemConfig,
    pub source: String,
    pub source_name: String,
    /// Directory against which relative paths in the config resolve.
    pub base_dir: PathBuf,
}

/// Line and column (1-based) of the last key of `path`, searching for each
/// key after the previous one.
pub fn locate(source: &str, path: &[&str]) -> Option<(usize, usize)> {
    let mut from = 0;
    let mut found = None;
    for key in path {
        let needle = format!("\"{key}\"");
        let mut search = from;
        loop {
            let rel = source[search..].find(&needle)?;
            let at = search + rel;
            let after = source[at + needle.len()..].trim_start();
            if after.starts_with(':') {
                found = Some(at);
                from = at + needle.len();
                break;
            }
            search = at + needle.len();
        }
    }
    let at = found?;
    let line = source[..at].matches('\n').count() + 1;
    let column = at - source[..at].rfind('\n').map_or(0, |p| p + 1) + 1;
    Some((line, column))
}

impl LoadedConfig {
    /// Loads `spec`, which is a file path or `bundled:NAME`.
    pub fn load(spec: &str) -> Result<Self, ConfigError> {
        if let Some(name) = spec.strip_prefix("bundled:") {
            let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) else {
                let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
                return Err(ConfigError {
                    source_name: spec.into(),
                    line: 0,
                    column: 0,
                    message: format!("no bundled config '{name}' (available: {})", names.join(", ")),
                });
            };
            return Self::parse(text, spec, PathBuf::from("."));
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_name: spec.into(),
            line: 0,
            column: 0,
            message: format!("cannot read config: {e}"),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, spec, base)
    }

    pub fn parse(text: &str, source_name: &str, base_dir: PathBuf) -> Result<Self, ConfigError> {
        let config: ProblemConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            source_name: source_name.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let loaded = Self { config, source: text.to_string(), source_name: source_name.into(), base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    /// An error at the key `path`, or at the document start if absent.
    pub fn error_at(&self, path: &[&str], message: impl Into<String>) -> ConfigError {
        let (line, column) = locate(&self.source, path).unwrap_or((1, 1));
        let dotted = path.join(".");
        ConfigError {
            source_name: self.source_name.clone(),
            line,
            column,
            message: format!("{dotted}: {}", message.into()),
        }
    }

    pub fn dim(&self) -> usize {
        self.config.grid.n
    }

    fn expression(&self, path: &[&str], src: &str) -> Result<Expr, ConfigError> {
        let e = Expr::parse(src).map_err(|e| self.error_at(path, format!("in '{src}': {e}")))?;
        if self.dim() == 1 && e.uses_x2() {
            return Err(self.error_at(path, format!("'{src}' references x2 on a one-dimensional domain")));
        }
        Ok(e)
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        if c.schema_version != CONFIG_SCHEMA {
            return Err(self.error_at(
                &["schema_version"],
                format!("unsupported schema '{}', expected '{CONFIG_SCHEMA}'", c.schema_version),
            ));
        }
        if !(1..=2).contains(&c.grid.n) {
            return Err(self.error_at(&["grid", "n"], format!("dimension must be 1 or 2, got {}", c.grid.n)));
        }
        if c.grid.cells < 4 {
            return Err(self.error_at(&["grid", "cells"], format!("need at least 4 cells per axis, got {}", c.grid.cells)));
        }
        self.energy()?;
        if let Some(k) = &c.constraint {
            self.expression(&["constraint", "boundary"], &k.boundary)?;
            match (k.kind, &k.obstacle) {
                (ConstraintKindSpec::Obstacle, None) => {
                    return Err(self.error_at(&["constraint", "kind"], "obstacle constraint needs an 'obstacle' expression"));
                }
                (ConstraintKindSpec::Unconstrained, Some(_)) => {
                    return Err(self.error_at(&["constraint", "obstacle"], "given for an unconstrained problem"));
                }
                _ => {}
            }
            if let Some(psi) = &k.obstacle {
                self.expression(&["constraint", "obstacle"], psi)?;
            }
            self.constraint_set()?;
        }
        if !(c.comparison.t > 1.0 && c.comparison.t.is_finite()) {
            return Err(self.error_at(&["comparison", "t"], format!("need t > 1, got {}", c.comparison.t)));
        }
        if c.comparison.w0 != "auto" {
            self.expression(&["comparison", "w0"], &c.comparison.w0)?;
        }
        self.schedule()?;
        let t = &c.tolerances;
        for (name, v) in [("stat", t.stat), ("vi", t.vi), ("el", t.el), ("outer", t.outer), ("fenchel", t.fenchel)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(self.error_at(&["tolerances", name], format!("must be positive, got {v}")));
            }
        }
        if t.max_iter == 0 {
            return Err(self.error_at(&["tolerances", "max_iter"], "must be positive"));
        }
        if c.output.fields.is_empty() {
            return Err(self.error_at(&["output", "fields"], "list at least one of \"csv\", \"binary\""));
        }
        if let Some(q) = &c.conjugate {
            if q.x.len() != c.grid.n {
                return Err(self.error_at(&["conjugate", "x"], format!("point has {} coordinates, expected {}", q.x.len(), c.grid.n)));
            }
            if q.x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(self.error_at(&["conjugate", "x"], "point must lie in [0, 1]ⁿ"));
            }
        }
        if let Some(k) = c.certify.k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(self.error_at(&["certify", "k"], format!("need k > 0, got {k}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.config.grid.n, self.config.grid.cells).expect("validated grid")
    }

    pub fn energy(&self) -> Result<EnergyDensity, ConfigError> {
        let e = &self.config.energy;
        let n = self.dim();
        let mut coeffs = BTreeMap::new();
        for (name, spec) in &e.coefficients {
            let path = ["energy", "coefficients", name.as_str()];
            let field = match spec {
                CoefficientSpec::Constant(v) => Ok(CoefficientField::constant(*v)),
                CoefficientSpec::Expression { expr, min, max } => {
                    CoefficientField::expression(name, self.expression(&path, expr)?, n, *min, *max)
                }
                CoefficientSpec::Samples { samples, cells, min, max } => {
                    CoefficientField::samples(name, n, *cells, samples.clone(), *min, *max)
                }
            }
            .map_err(|err| self.error_at(&path, err.to_string()))?;
            coeffs.insert(name.clone(), field);
        }
        make_energy(&e.name, n, &e.params, coeffs).map_err(|err| {
            let path: Vec<&str> = match &err {
                EnergyError::ParameterOutOfRange { param, .. } if e.params.contains_key(param) => {
                    vec!["energy", "params", param]
                }
                EnergyError::ParameterOutOfRange { param, .. } => vec!["energy", "coefficients", param],
                EnergyError::Unexpected { what: "parameter", name, .. } => vec!["energy", "params", name],
                EnergyError::Unexpected { name, .. } => vec!["energy", "coefficients", name],
                EnergyError::Missing { .. } | EnergyError::UnknownName(_) => vec!["energy", "name"],
                _ => vec!["energy"],
            };
            self.error_at(&path, err.to_string())
        })
    }

    fn sample(&self, path: &[&str], src: &str) -> Result<ScalarField, ConfigError> {
        let e = self.expression(path, src)?;
        let u = self.grid().sample(|x: Vec2N| e.eval(x));
        if let Some(v) = u.values().iter().position(|v| !v.is_finite()) {
            let at = self.grid().node_point(v);
            return Err(self.error_at(path, format!("'{src}' is not finite at {at}")));
        }
        Ok(u)
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet, ConfigError> {
        let Some(k) = &self.config.constraint else {
            return Err(self.error_at(&["constraint"], "solving needs a 'constraint' section"));
        };
        let g = self.grid();
        let u0 = self.sample(&["constraint", "boundary"], &k.boundary)?;
        let Some(psi_src) = &k.obstacle else {
            return Ok(ConstraintSet::unconstrained(u0));
        };
        let psi = self.sample(&["constraint", "obstacle"], psi_src)?;
        for v in g.boundary_nodes() {
            if psi.values()[v] > u0.values()[v] {
                return Err(self.error_at(
                    &["constraint", "obstacle"],
                    format!(
                        "obstacle {} exceeds boundary value {} at boundary point {}",
                        psi.values()[v],
                        u0.values()[v],
                        g.node_point(v)
                    ),
                ));
            }
        }
        let psi: Vec<Option<f64>> = (0..g.node_count()).map(|v| (!g.is_boundary(v)).then(|| psi.values()[v])).collect();
        ConstraintSet::obstacle(u0, psi).map_err(|e| self.error_at(&["constraint", "obstacle"], e.to_string()))
    }

    pub fn schedule(&self) -> Result<Schedule, ConfigError> {
        let s = &self.config.schedule;
        let mut sched = match (&s.k, &s.eps) {
            (Some(k), Some(eps)) => Schedule::new(k.clone(), eps.clone()),
            (Some(_), None) => return Err(self.error_at(&["schedule", "k"], "explicit k list needs a matching 'eps' list")),
            (None, Some(_)) => return Err(self.error_at(&["schedule", "eps"], "explicit eps list needs a matching 'k' list")),
            (None, None) => {
                if !(s.k0 > 0.0 && s.k0.is_finite()) {
                    return Err(self.error_at(&["schedule", "k0"], format!("need k0 > 0, got {}", s.k0)));
                }
                Schedule::geometric(s.k0, s.growth, s.stages, s.eps0)
            }
        }
        .map_err(|e| self.error_at(&["schedule"], e.to_string()))?;
        if let Some(b) = s.stop_early {
            sched.stop_early = b;
        }
        if let Some(m) = s.min_stages {
            if m == 0 || m > sched.len() {
                return Err(self.error_at(&["schedule", "min_stages"], format!("must lie in 1..={}", sched.len())));
            }
            sched.min_stages = m;
        }
        Ok(sched)
    }

    pub fn problem(&self) -> Result<Problem, ConfigError> {
        let g = self.grid();
        let energy = self.energy()?;
        let constraint = self.constraint_set()?;
        let mut problem = Problem::with_default_comparison(g, energy, constraint, self.config.comparison.t);
        if self.config.comparison.w0 != "auto" {
            let w = self.sample(&["comparison", "w0"], &self.config.comparison.w0)?;
            let projected = problem.constraint.project(&w);
            if projected.dist_inf(&w) > 0.0 {
                return Err(self.error_at(
                    &["comparison", "w0"],
                    "comparison function must satisfy the boundary data and the obstacle",
                ));
            }
            problem.w0 = w;
        }
        Ok(problem)
    }

    /// The output directory: the override, else the config's, else `out`.
    pub fn out_dir(&self, over: Option<&Path>) -> PathBuf {
        match (over, &self.config.output.dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(d)) if d.is_relative() => self.base_dir.join(d),
            (None, Some(d)) => d.clone(),
            (None, None) => PathBuf::from("out"),
        }
    }
}
