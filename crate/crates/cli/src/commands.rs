//! The four subcommands. Each returns an [`Outcome`] or a [`CliError`]; the
//! binary maps both onto the exit-code contract.

use crate::config::{ConfigError, LoadedConfig, SampleLevel};
use fenchelkit::discretize::{write_binary, write_csv, FieldData};
use fenchelkit::extension::{extension_certificate, SampleSpec};
use fenchelkit::legendre::{fenchel_certificate, fk_star_certificate, superlinear_dual_probe};
use fenchelkit::solver::{run_diagnostics, run_scheme, SolveReport, SolveStatus, SolverError, REPORT_SCHEMA};
use fenchelkit::{Certificate, ConjugateHandle, EnergyDensity, RestrictedConjugate, Vec2N};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const REPORT_FILE_SCHEMA: &str = "fenchelkit.report/1";
pub const CERTIFY_FILE_SCHEMA: &str = "fenchelkit.certify/1";

/// How a command finished when it ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    DiagnosticFail,
    NonConverged,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::DiagnosticFail => 1,
            Outcome::NonConverged => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    /// Bad flags or input files.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    /// A check that aborts the run, such as the coercivity bound.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            _ => 2,
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn timestamp() -> String {
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("unix:{secs}")
}

/// Writes pretty JSON. Every top-level field sits on its own line, so the
/// `generated_at` line can be dropped when comparing runs.
fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io(path, e))
}

// ---------------------------------------------------------------- conjugate

fn parse_point(s: &str, dim: usize) -> Result<Vec2N, CliError> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad coordinate '{t}' in '{s}'"))))
        .collect::<Result<_, _>>()?;
    if vals.len() != dim {
        return Err(CliError::Usage(format!("point '{s}' has {} coordinates, expected {dim}", vals.len())));
    }
    Ok(Vec2N::from_slice(&vals))
}

/// Reads query points, one per row with `dim` columns. A header row is
/// allowed and recognized by a non-numeric first cell.
pub fn read_queries(path: &Path, dim: usize) -> Result<Vec<Vec2N>, CliError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(|e| io(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io(path, e))?;
        if i == 0 && rec.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != dim {
            return Err(CliError::Usage(format!(
                "{}: row {}: expected {dim} columns, got {}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| CliError::Usage(format!("{}: row {}: bad number '{c}'", path.display(), i + 1))))
            .collect::<Result<_, _>>()?;
        out.push(Vec2N::from_slice(&vals));
    }
    Ok(out)
}

pub struct ConjugateArgs<'a> {
    pub x: Option<&'a str>,
    pub queries: Option<&'a Path>,
    pub k: Option<f64>,
    pub out: Option<&'a Path>,
}

/// F*(x, z) at each query z, or F_k*(x, z) (+∞ outside the closed k-ball)
/// when `k` is given. Writes `conjugate.csv` and returns its path.
pub fn cmd_conjugate(cfg: &LoadedConfig, args: ConjugateArgs<'_>) -> Result<PathBuf, CliError> {
    let n = cfg.dim();
    let f = cfg.energy()?;
    let x = match (args.x, &cfg.config.conjugate) {
        (Some(s), _) => parse_point(s, n)?,
        (None, Some(c)) => Vec2N::from_slice(&c.x),
        (None, None) => return Err(CliError::Usage("no point x: pass --x or set conjugate.x in the config".into())),
    };
    if x.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CliError::Usage(format!("x = {x} lies outside [0, 1]ⁿ")));
    }
    let queries = match (args.queries, cfg.config.conjugate.as_ref().and_then(|c| c.queries.as_ref())) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => cfg.base_dir.join(p),
        (None, None) => return Err(CliError::Usage("no query file: pass --queries or set conjugate.queries".into())),
    };
    if let Some(k) = args.k {
        if !(k > 0.0 && k.is_finite()) {
            return Err(CliError::Usage(format!("--k must be positive, got {k}")));
        }
    }
    let zs = read_queries(&queries, n)?;
    let conj = ConjugateHandle::analytic(&f);
    let dir = cfg.out_dir(args.out);
    ensure_dir(&dir)?;
    let path = dir.join("conjugate.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    let mut header: Vec<String> = (1..=n).map(|i| format!("z{i}")).collect();
    header.extend(["value".to_string(), "flag".to_string()]);
    w.write_record(&header).map_err(|e| io(&path, e))?;
    for z in zs {
        let outside = args.k.is_some_and(|k| z.norm() > k);
        let v = if outside { None } else { conj.eval(x, z).finite() };
        let mut row: Vec<String> = z.as_slice().iter().map(|c| format!("{c:?}")).collect();
        match v {
            Some(v) => row.extend([format!("{v:?}"), String::new()]),
            None => row.extend(["inf".to_string(), "INF".to_string()]),
        }
        w.write_record(&row).map_err(|e| io(&path, e))?;
    }
    w.flush().map_err(|e| io(&path, e))?;
    Ok(path)
}

// ---------------------------------------------------------------- certify

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyFile {
    pub generated_at: String,
    pub schema_version: String,
    pub energy: String,
    pub k: f64,
    pub passed: bool,
    pub certificates: Vec<Certificate>,
}

/// Extension, restricted-conjugate, dual-growth and Fenchel certificates for
/// one energy and one k.
pub fn certificate_suite(f: &EnergyDensity, k: f64, level: SampleLevel) -> Result<Vec<Certificate>, CliError> {
    let (spec, star, probe, triples) = match level {
        SampleLevel::Full => (SampleSpec::default(), 1000, 10_000, 10_000),
        SampleLevel::Quick => (SampleSpec::quick(), 100, 1000, 1000),
    };
    let rk = RestrictedConjugate::analytic(f, k).map_err(|e| CliError::Failed(e.to_string()))?;
    let conj = ConjugateHandle::analytic(f);
    let mut radii = vec![1.0, 4.0, 16.0];
    if !radii.contains(&k) {
        radii.push(k);
    }
    Ok(vec![
        extension_certificate(f, k, spec),
        fk_star_certificate(&rk, star),
        superlinear_dual_probe(f, &conj, &radii, probe),
        fenchel_certificate(f, &conj, 4.0, triples),
    ])
}

pub struct CertifyArgs<'a> {
    pub k: Option<f64>,
    pub out: Option<&'a Path>,
    pub corrupt_derivative: Option<f64>,
}

pub fn cmd_certify(cfg: &LoadedConfig, args: CertifyArgs<'_>) -> Result<(CertifyFile, PathBuf), CliError> {
    let k = args
        .k
        .or(cfg.config.certify.k)
        .ok_or_else(|| CliError::Usage("no k: pass --k or set certify.k in the config".into()))?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(CliError::Usage(format!("--k must be positive, got {k}")));
    }
    let mut f = cfg.energy()?;
    if let Some(factor) = args.corrupt_derivative {
        f = f.with_corrupted_derivative(factor);
    }
    let certificates = certificate_suite(&f, k, cfg.config.certify.samples)?;
    let file = CertifyFile {
        generated_at: timestamp(),
        schema_version: CERTIFY_FILE_SCHEMA.into(),
        energy: f.name().into(),
        k,
        passed: certificates.iter().all(Certificate::passed),
        certificates,
    };
    let dir = cfg.out_dir(args.out);
    ensure_dir(&dir)?;
    let path = dir.join("certify.json");
    write_json(&path, &file)?;
    Ok((file, path))
}

pub fn certify_summary(file: &CertifyFile) -> String {
    let mut s = format!("certify {} at k = {}: {}\n", file.energy, file.k, if file.passed { "PASS" } else { "FAIL" });
    for c in &file.certificates {
        let _ = writeln!(s, "[{}]", c.title);
        s.push_str(&c.summary());
    }
    s
}

// ---------------------------------------------------------------- solve

/// The on-disk report: a timestamp line, the run's seed and the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub generated_at: String,
    pub schema_version: String,
    pub seed: u64,
    pub report: SolveReport,
}

pub struct SolveOutput {
    pub report: ReportFile,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub outcome: Outcome,
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::Schedule(_) | SolverError::Comparison(_) | SolverError::Hypothesis { .. } => {
            CliError::Usage(e.to_string())
        }
        _ => CliError::Failed(e.to_string()),
    }
}

fn dump(dir: &Path, stem: &str, data: &FieldData, cfg: &LoadedConfig, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    use crate::config::FieldFormat;
    for fmt in &cfg.config.output.fields {
        let path = match fmt {
            FieldFormat::Csv => dir.join(format!("{stem}.csv")),
            FieldFormat::Binary => dir.join(format!("{stem}.bin")),
        };
        match fmt {
            FieldFormat::Csv => write_csv(&path, data),
            FieldFormat::Binary => write_binary(&path, data),
        }
        .map_err(|e| io(&path, e))?;
        files.push(path);
    }
    Ok(())
}

pub fn cmd_solve(cfg: &LoadedConfig, out: Option<&Path>) -> Result<SolveOutput, CliError> {
    let problem = cfg.problem()?;
    let sched = cfg.schedule()?;
    let mut report = run_scheme(&problem, &sched, &cfg.config.tolerances).map_err(solver_error)?;
    let diagnostics = run_diagnostics(&problem, &report, cfg.config.seed).map_err(|e| CliError::Failed(e.to_string()))?;
    let diag_ok = diagnostics.passed;
    report.diagnostics = Some(diagnostics);
    let outcome = match (report.status, diag_ok) {
        (SolveStatus::NonConverged, _) => Outcome::NonConverged,
        (_, false) => Outcome::DiagnosticFail,
        _ => Outcome::Pass,
    };
    let dir = cfg.out_dir(out);
    ensure_dir(&dir)?;
    let mut files = Vec::new();
    let g = report.grid;
    dump(&dir, "u", &FieldData::from_scalar(&report.u), cfg, &mut files)?;
    dump(&dir, "sigma", &FieldData::from_vector(&report.sigma), cfg, &mut files)?;
    dump(&dir, "fenchel_residual", &FieldData::from_cells(&g, report.fenchel_residual.clone()), cfg, &mut files)?;
    let file = ReportFile {
        generated_at: timestamp(),
        schema_version: REPORT_FILE_SCHEMA.into(),
        seed: cfg.config.seed,
        report,
    };
    let path = dir.join("report.json");
    write_json(&path, &file)?;
    files.insert(0, path);
    Ok(SolveOutput { report: file, dir, files, outcome })
}

pub fn solve_summary(out: &SolveOutput) -> String {
    let r = &out.report.report;
    let mut s = String::new();
    let _ = writeln!(s, "energy {} on {} cells^{}, status {:?}", r.energy, r.grid.cells_per_axis(), r.grid.dim(), r.status);
    s.push_str(&render_stages(r));
    let _ = writeln!(s, "final energy {:?}", r.primal_integral);
    if let Some(d) = &r.diagnostics {
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        let _ = writeln!(
            s,
            "diagnostics: dis-var {}, dual {}, vi {}, fenchel {}, sigma {}",
            mark(d.dis_var.passed),
            mark(d.dual.passed),
            mark(d.vi.passed),
            mark(d.fenchel.passed),
            mark(d.sigma.nonincreasing_tail)
        );
    }
    for f in &out.files {
        let _ = writeln!(s, "wrote {}", f.display());
    }
    s
}

// ---------------------------------------------------------------- diagnose

pub const SELECTORS: [&str; 7] = ["stages", "dis-var", "dual", "vi", "fenchel", "sigma", "all"];

pub fn read_report(path: &Path) -> Result<ReportFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
    let schema = value.get("schema_version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if schema != REPORT_FILE_SCHEMA {
        return Err(CliError::Usage(format!(
            "{}: report schema '{schema}' is not supported (expected '{REPORT_FILE_SCHEMA}')",
            path.display()
        )));
    }
    let inner = value.pointer("/report/schema_version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if inner != REPORT_SCHEMA {
        return Err(CliError::Usage(format!(
            "{}: solve schema '{inner}' is not supported (expected '{REPORT_SCHEMA}')",
            path.display()
        )));
    }
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

fn render_stages(r: &SolveReport) -> String {
    let mut s = String::from("stage k eps iterations stop stationarity energy grad_l1 max_deriv\n");
    for (j, st) in r.stages.iter().enumerate() {
        let _ = writeln!(
            s,
            "{j} {:?} {:?} {} {:?} {:?} {:?} {:?} {:?}",
            st.k, st.eps, st.iterations, st.stop, st.stationarity, st.energy, st.grad_l1, st.max_deriv
        );
    }
    s
}

/// Prints stored tables with shortest round-trip float formatting, so every
/// number equals the value the solver produced.
pub fn render(file: &ReportFile, selector: &str) -> Result<String, CliError> {
    if !SELECTORS.contains(&selector) {
        return Err(CliError::Usage(format!("unknown selector '{selector}' (valid: {})", SELECTORS.join(", "))));
    }
    let r = &file.report;
    let needs_diag = selector != "stages";
    let d = match (&r.diagnostics, needs_diag) {
        (Some(d), _) => Some(d),
        (None, false) => None,
        (None, true) => return Err(CliError::Usage("report has no diagnostics".into())),
    };
    let all = selector == "all";
    let mut s = String::new();
    if all || selector == "stages" {
        let _ = writeln!(s, "== stages (status {:?}, coincidence reached {})", r.status, r.coincidence_reached);
        s.push_str(&render_stages(r));
    }
    let d = match d {
        Some(d) => d,
        None => return Ok(s),
    };
    if all || selector == "dis-var" {
        let t = &d.dis_var;
        let _ = writeln!(s, "== dis-var (tol {:?}, passed {})", t.tol, t.passed);
        s.push_str("stage w pairing c eps margin passed\n");
        for row in &t.rows {
            let _ = writeln!(s, "{} {} {:?} {:?} {:?} {:?} {}", row.stage, row.w, row.pairing, row.c, row.eps, row.margin, row.passed);
        }
    }
    if all || selector == "dual" {
        let t = &d.dual;
        let _ = writeln!(s, "== dual bound (t {:?}, passed {})", t.t, t.passed);
        s.push_str("stage lhs rhs infinite_cells passed\n");
        for row in &t.rows {
            let _ = writeln!(s, "{} {:?} {:?} {} {}", row.stage, row.lhs, row.rhs, row.infinite_cells.len(), row.passed);
        }
        let _ = writeln!(s, "limit {:?} liminf {:?} limit_ok {}", t.limit, t.liminf, t.limit_ok);
    }
    if all || selector == "vi" {
        let t = &d.vi;
        let _ = writeln!(s, "== variational inequality ({:?}, tol {:?}, {} contact nodes, passed {})", t.kind, t.tol, t.contact_nodes.len(), t.passed);
        s.push_str("eta m grad_l1 off_contact passed\n");
        for row in &t.rows {
            let _ = writeln!(s, "{} {:?} {:?} {} {}", row.name, row.m, row.grad_l1, row.off_contact, row.passed);
        }
    }
    if all || selector == "fenchel" {
        let t = &d.fenchel;
        let _ = writeln!(s, "== fenchel (passed {})", t.passed);
        let _ = writeln!(s, "max_abs {:?}", t.max_abs);
        let _ = writeln!(s, "l1 {:?}", t.l1);
        let _ = writeln!(s, "integrated_gap {:?}", t.integrated_gap);
        let _ = writeln!(s, "chain_t {:?} chain_worst {:?} chain_violations {}", t.chain_t, t.chain_worst, t.chain_violations.len());
    }
    if all || selector == "sigma" {
        let t = &d.sigma;
        let _ = writeln!(s, "== sigma convergence (tail {}, nonincreasing {})", t.tail, t.nonincreasing_tail);
        let th: Vec<String> = t.thresholds.iter().map(|v| format!("frac>{v:?}")).collect();
        let _ = writeln!(s, "stage l1 {}", th.join(" "));
        for (j, (fr, l1)) in t.fractions.iter().zip(&t.l1).enumerate() {
            let fr: Vec<String> = fr.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{j} {l1:?} {}", fr.join(" "));
        }
    }
    Ok(s)
}
