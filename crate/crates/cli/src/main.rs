use clap::{Parser, Subcommand};
use fenchelkit_cli::commands::{self, CertifyArgs, ConjugateArgs};
use fenchelkit_cli::{CliError, LoadedConfig, Outcome};
use std::path::PathBuf;
use std::process::ExitCode;

/// Restricted conjugates, extension certificates and Lipschitz-regularized
/// minimization from a JSON problem config.
///
/// Exit codes: 0 pass, 1 diagnostic or certificate failure, 2 config or
/// usage error, 3 solver did not converge.
#[derive(Parser, Debug)]
#[command(name = "fenchelkit", version)]
struct Cli {
    /// Suppress summaries on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate F*(x, z) at query points, or F_k*(x, z) with --k.
    Conjugate {
        /// Config file, or bundled:NAME.
        #[arg(long)]
        config: String,
        /// Evaluation point x, comma separated (overrides conjugate.x).
        #[arg(long)]
        x: Option<String>,
        /// CSV of query points z (overrides conjugate.queries).
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Restrict to the closed k-ball: +∞ outside.
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the extension and conjugate certificates at one k.
    Certify {
        #[arg(long)]
        config: String,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test hook: scale the energy's derivative by this factor.
        #[arg(long, hide = true)]
        corrupt_derivative: Option<f64>,
    },
    /// Run the approximation scheme and every diagnostic.
    Solve {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print stored tables from a solve report without recomputation.
    Diagnose {
        /// report.json written by `solve`.
        report: PathBuf,
        /// One of: stages, dis-var, dual, vi, fenchel, sigma, all.
        #[arg(long, default_value = "all")]
        what: String,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FENCHELKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FENCHELKIT_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    init_threads()?;
    let say = |s: &str| {
        if !cli.quiet {
            print!("{s}");
        }
    };
    match &cli.command {
        Command::Conjugate { config, x, queries, k, out } => {
            let cfg = LoadedConfig::load(config)?;
            let args = ConjugateArgs { x: x.as_deref(), queries: queries.as_deref(), k: *k, out: out.as_deref() };
            let path = commands::cmd_conjugate(&cfg, args)?;
            say(&format!("wrote {}\n", path.display()));
            Ok(Outcome::Pass)
        }
        Command::Certify { config, k, out, corrupt_derivative } => {
            let cfg = LoadedConfig::load(config)?;
            let args = CertifyArgs { k: *k, out: out.as_deref(), corrupt_derivative: *corrupt_derivative };
            let (file, path) = commands::cmd_certify(&cfg, args)?;
            say(&commands::certify_summary(&file));
            say(&format!("wrote {}\n", path.display()));
            Ok(if file.passed { Outcome::Pass } else { Outcome::DiagnosticFail })
        }
        Command::Solve { config, out } => {
            let cfg = LoadedConfig::load(config)?;
            let res = commands::cmd_solve(&cfg, out.as_deref())?;
            say(&commands::solve_summary(&res));
            Ok(res.outcome)
        }
        Command::Diagnose { report, what } => {
            if !commands::SELECTORS.contains(&what.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown selector '{what}' (valid: {})",
                    commands::SELECTORS.join(", ")
                )));
            }
            let file = commands::read_report(report)?;
            // tables are the requested output, so --quiet does not hide them
            print!("{}", commands::render(&file, what)?);
            Ok(Outcome::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
