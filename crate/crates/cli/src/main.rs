//! `tatonnement` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and I/O errors, 2 when the numerics
//! fail (oracle non-convergence, unbounded demand, negative multiplicative step).

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tatonnement::dual::{recommend_stepsize, theory_report};
use tatonnement::experiment::{compare_variants, run_experiment, ExperimentConfig, ExperimentError};
use tatonnement::io::{
    generate_synthetic, ingest_ratings, read_instance, write_instance, Distribution, Fill, IngestOptions, SyntheticSpec,
};
use tatonnement::market::{validate_instance, UtilityKind};
use tatonnement::oracle::{parse_p_star, solve_equilibrium, DEFAULT_MAX_ITER};
use tatonnement::Market;

#[derive(Parser)]
#[command(name = "tatonnement", version, about = "Tatonnement dynamics for Fisher markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance.
    Gen(GenArgs),
    /// Build an instance from a ratings CSV (`user_id,item_id,rating`).
    Ingest(IngestArgs),
    /// Solve for equilibrium prices by proportional response.
    Oracle(OracleArgs),
    /// Print the theoretical bounds for a stepsize.
    Bounds(BoundsArgs),
    /// Run a configured experiment.
    Run(ConfigArgs),
    /// Compare additive, multiplicative, and entropic updates.
    Compare(ConfigArgs),
}

#[derive(Args)]
struct GenArgs {
    /// uniform, lognormal, exponential, truncnormal, or integers.
    #[arg(long)]
    dist: Distribution,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    quasilinear: bool,
    /// Keep raw budgets for a linear market.
    #[arg(long)]
    raw_budgets: bool,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    ratings: PathBuf,
    /// Users and items with fewer ratings are dropped, repeatedly.
    #[arg(long)]
    min_entries: usize,
    #[arg(long, value_parser = parse_fill)]
    fill: Fill,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    quasilinear: bool,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    market: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: u64,
    /// Write the result here instead of stdout.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    market: PathBuf,
    #[arg(long)]
    eta: f64,
    /// Equilibrium prices from `oracle -o`, or a plain list; solved on the fly when absent.
    #[arg(long)]
    pstar: Option<PathBuf>,
    /// Also report the stepsize that guarantees this squared error.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_fill(s: &str) -> Result<Fill, String> {
    s.parse()
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(e: impl Display) -> Self {
        Failure { code: 1, msg: e.to_string() }
    }

    fn numerical(e: impl Display) -> Self {
        Failure { code: 2, msg: e.to_string() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = if e.is_numerical() { 2 } else { 1 };
        Failure { code, msg: e.to_string() }
    }
}

fn load(path: &Path) -> Result<Market, Failure> {
    let inst = read_instance(path).map_err(Failure::usage)?;
    let report = validate_instance(&inst);
    if !report.is_ok() {
        return Err(Failure::usage(format!("{}: {report}", path.display())));
    }
    Ok(inst)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn read_p_star(path: &Path, m: usize) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let p = parse_p_star(&text)
        .or_else(|| text.split_whitespace().map(|t| t.parse().ok()).collect())
        .ok_or_else(|| Failure::usage(format!("{}: no equilibrium prices found", path.display())))?;
    if p.len() != m {
        return Err(Failure::usage(format!("{}: expected {m} prices, found {}", path.display(), p.len())));
    }
    Ok(p)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Gen(a) => {
            let spec = SyntheticSpec {
                distribution: a.dist,
                n: a.n,
                m: a.m,
                seed: a.seed,
                utility: if a.quasilinear { UtilityKind::QuasiLinear } else { UtilityKind::Linear },
                normalize_budgets: !a.raw_budgets,
            };
            let inst = generate_synthetic(&spec).map_err(Failure::usage)?;
            write_instance(&a.output, &inst).map_err(Failure::usage)
        }
        Command::Ingest(a) => {
            let mut opts = IngestOptions::new(a.min_entries, a.fill, a.seed);
            if a.quasilinear {
                opts.utility = UtilityKind::QuasiLinear;
            }
            let inst = ingest_ratings(&a.ratings, &opts).map_err(Failure::usage)?;
            eprintln!("ingested {} users x {} items", inst.n(), inst.m());
            write_instance(&a.output, &inst).map_err(Failure::usage)
        }
        Command::Oracle(a) => {
            let inst = load(&a.market)?;
            if a.tol.is_nan() || a.tol <= 0.0 {
                return Err(Failure::usage("--tol must be positive"));
            }
            let eq = solve_equilibrium(&inst, a.tol, a.max_iter).map_err(Failure::numerical)?;
            match a.output {
                Some(path) => write_text(&path, &eq.to_text()),
                None => {
                    print!("{}", eq.to_text());
                    Ok(())
                }
            }
        }
        Command::Bounds(a) => {
            let inst = load(&a.market)?;
            let p_star = match &a.pstar {
                Some(path) => read_p_star(path, inst.m())?,
                None => solve_equilibrium(&inst, 1e-10, DEFAULT_MAX_ITER).map_err(Failure::numerical)?.p_star,
            };
            let mut report = theory_report(&inst, a.eta, &p_star).map_err(|e| {
                if e.is_numerical() {
                    Failure::numerical(e)
                } else {
                    Failure::usage(e)
                }
            })?;
            if let Some(eps) = a.epsilon {
                if eps.is_nan() || eps <= 0.0 {
                    return Err(Failure::usage("--epsilon must be positive"));
                }
                report.recommended_eta = Some(recommend_stepsize(&inst, eps, &p_star));
            }
            print!("{}", report.to_key_value());
            Ok(())
        }
        Command::Run(a) => {
            let cfg = ExperimentConfig::from_file(&a.config)?;
            let out = run_experiment(&cfg)?;
            eprintln!("{} runs written to {}", out.summaries.len(), cfg.output_dir.display());
            Ok(())
        }
        Command::Compare(a) => {
            let cfg = ExperimentConfig::from_file(&a.config)?;
            let out = compare_variants(&cfg)?;
            eprintln!("{} runs written to {}", out.summaries.len(), cfg.output_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
