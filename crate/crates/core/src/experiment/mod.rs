//! Configured experiments: solve the equilibrium once, run every
//! (variant, stepsize) pair in parallel, and write CSV/SVG artifacts.

mod config;
mod stats;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, MarketSource, ScheduleKind};
pub use stats::{plateau_estimate, pre_plateau_end, slope_fit, StatsError};

use crate::dual::{fmt_real, price_floor, stepsize_cap, theory_report, DualError, TheoryReport};
use crate::engine::{run, EngineError, RunConfig, Trajectory, Variant};
use crate::io::{generate_synthetic, read_instance, IoError};
use crate::market::{validate_instance, MarketInstance};
use crate::oracle::{solve_equilibrium, EquilibriumResult, OracleError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Input(#[from] IoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("market fails validation: {0}")]
    InvalidMarket(String),
    #[error("equilibrium oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("run {run_id}: {source}")]
    Engine {
        run_id: String,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    /// Failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            ExperimentError::Oracle(_) => true,
            ExperimentError::Engine { source, .. } => source.is_numerical(),
            ExperimentError::Dual(e) => e.is_numerical(),
            _ => false,
        }
    }
}

/// One run to execute.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    /// Variant name plus any modification, e.g. `additive+cap`.
    pub label: String,
    pub eta: f64,
    pub config: RunConfig<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub label: String,
    pub variant: Variant,
    pub eta: f64,
    pub final_err_sq: f64,
    pub plateau: f64,
    pub slope: f64,
    /// Theory constants, present only for additive runs whose largest stepsize is below the cap.
    pub theory: Option<TheoryReport<f64>>,
    pub violations: u64,
}

impl RunSummary {
    pub const CSV_HEADER: &'static str = "run_id,variant,eta,final_err_sq,plateau,slope,alpha,e_bound,violations";

    pub fn csv_row(&self) -> String {
        let (alpha, e) = self.theory.as_ref().map_or((f64::NAN, f64::NAN), |r| (r.qg_modulus, r.error_radius));
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.label,
            fmt_real(self.eta),
            fmt_real(self.final_err_sq),
            fmt_real(self.plateau),
            fmt_real(self.slope),
            fmt_real(alpha),
            fmt_real(e),
            self.violations
        )
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub market: MarketInstance<f64>,
    pub equilibrium: EquilibriumResult<f64>,
    pub runs: Vec<RunSpec>,
    pub trajectories: Vec<Trajectory<f64>>,
    pub summaries: Vec<RunSummary>,
    /// Every file written, in write order.
    pub files: Vec<PathBuf>,
}

pub fn load_market(source: &MarketSource) -> Result<MarketInstance<f64>, ExperimentError> {
    let inst = match source {
        MarketSource::File(path) => read_instance(path)?,
        MarketSource::Synthetic(spec) => generate_synthetic(spec)?,
    };
    let report = validate_instance(&inst);
    if !report.is_ok() {
        return Err(ExperimentError::InvalidMarket(report.to_string()));
    }
    Ok(inst)
}

fn run_id(k: usize) -> String {
    format!("{k:03}")
}

/// Runs for `run`: every configured variant crossed with every stepsize.
pub fn plan_runs(cfg: &ExperimentConfig, inst: &MarketInstance<f64>) -> Vec<RunSpec> {
    let floor = price_floor(inst);
    cfg.run_grid()
        .into_iter()
        .enumerate()
        .map(|(k, (variant, eta))| RunSpec {
            run_id: run_id(k),
            label: variant.to_string(),
            eta,
            config: cfg.run_config(variant, eta, Some(&floor)),
        })
        .collect()
}

/// Rescaled stepsize `m * eta / sum_i B_i` for the multiplicative and entropic rules.
pub fn rescaled_eta(inst: &MarketInstance<f64>, eta: f64) -> f64 {
    inst.m() as f64 * eta / inst.total_budget()
}

/// Runs for `compare`: for each base stepsize, additive at `eta` and the two
/// multiplicative rules at [`rescaled_eta`], optionally each again with capped
/// excess demand and with a constant price floor.
pub fn plan_comparison(cfg: &ExperimentConfig, inst: &MarketInstance<f64>) -> Vec<RunSpec> {
    let floor = price_floor(inst);
    let const_floor = vec![cfg.floor_value; inst.m()];
    let mut specs = Vec::new();
    let etas: &[f64] = if cfg.schedule == ScheduleKind::InvSqrtHorizon { &[f64::NAN] } else { &cfg.etas };
    for &base in etas {
        for variant in Variant::ALL {
            let eta = if variant == Variant::Additive { base } else { rescaled_eta(inst, base) };
            let plain = cfg.run_config(variant, eta, Some(&floor));
            let mut push = |label: String, config: RunConfig<f64>| {
                specs.push(RunSpec { run_id: run_id(specs.len()), label, eta, config });
            };
            push(variant.to_string(), plain.clone());
            if cfg.include_modified {
                let mut capped = plain.clone();
                capped.cap_excess = true;
                push(format!("{variant}+cap"), capped);
                let mut floored = plain;
                floored.price_floor = Some(const_floor.clone());
                push(format!("{variant}+floor"), floored);
            }
        }
    }
    specs
}

fn theory_for(
    inst: &MarketInstance<f64>,
    spec: &RunSpec,
    p_star: &[f64],
) -> Result<Option<TheoryReport<f64>>, DualError> {
    let c = &spec.config;
    if c.variant != Variant::Additive || c.cap_excess || c.price_floor.is_some() {
        return Ok(None);
    }
    let eta = c.schedule.max_eta();
    if !(eta < stepsize_cap(&price_floor(inst))) {
        return Ok(None);
    }
    theory_report(inst, eta, p_star).map(Some)
}

fn summarize(
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    traj: &Trajectory<f64>,
    theory: Option<TheoryReport<f64>>,
) -> RunSummary {
    let series = traj.err_series();
    let final_err_sq = series.last().map_or(f64::NAN, |p| p.1);
    let window = cfg.plateau_window.min(series.len());
    let plateau = plateau_estimate(traj, window).unwrap_or(f64::NAN);
    let (t0, t1) = cfg.slope_range.unwrap_or_else(|| {
        let end = pre_plateau_end(traj, plateau, 2.0).unwrap_or(cfg.iterations);
        (0, end)
    });
    RunSummary {
        run_id: spec.run_id.clone(),
        label: spec.label.clone(),
        variant: spec.config.variant,
        eta: spec.eta,
        final_err_sq,
        plateau,
        slope: slope_fit(traj, t0, t1).unwrap_or(f64::NAN),
        theory,
        violations: traj.violations,
    }
}

fn write_file(files: &mut Vec<PathBuf>, path: PathBuf, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(&path, bytes).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
    files.push(path);
    Ok(())
}

fn execute(
    cfg: &ExperimentConfig,
    planner: fn(&ExperimentConfig, &MarketInstance<f64>) -> Vec<RunSpec>,
) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let inst = load_market(&cfg.market)?;
    let equilibrium = solve_equilibrium(&inst, cfg.oracle_tol, cfg.oracle_max_iter)?;
    let p_star = equilibrium.p_star.clone();
    let runs = planner(cfg, &inst);

    let work = || {
        runs.par_iter()
            .map(|spec| {
                run(&inst, &spec.config, Some(&p_star))
                    .map_err(|source| ExperimentError::Engine { run_id: spec.run_id.clone(), source })
            })
            .collect::<Vec<_>>()
    };
    let results = match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    };
    let trajectories = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut summaries = Vec::with_capacity(runs.len());
    for (spec, traj) in runs.iter().zip(&trajectories) {
        let theory = theory_for(&inst, spec, &p_star)?;
        summaries.push(summarize(cfg, spec, traj, theory));
    }

    Ok(ExperimentOutcome { market: inst, equilibrium, runs, trajectories, summaries, files: Vec::new() })
}

fn write_common(cfg: &ExperimentConfig, out: &mut ExperimentOutcome) -> Result<(), ExperimentError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.clone(), source })?;
    let mut files = Vec::new();

    for (spec, traj) in out.runs.iter().zip(&out.trajectories) {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).expect("writing to memory");
        write_file(&mut files, dir.join(format!("run_{}.csv", spec.run_id)), &buf)?;
    }

    let mut summary = String::from(RunSummary::CSV_HEADER);
    summary.push('\n');
    for s in &out.summaries {
        summary.push_str(&s.csv_row());
        summary.push('\n');
    }
    write_file(&mut files, dir.join("summary.csv"), summary.as_bytes())?;

    let mut theory = String::new();
    for s in &out.summaries {
        theory.push_str(&format!("[{}]\nvariant={}\n", s.run_id, s.label));
        match &s.theory {
            Some(r) => theory.push_str(&r.to_key_value()),
            None => theory.push_str("bounds=none\n"),
        }
        theory.push('\n');
    }
    write_file(&mut files, dir.join("theory.txt"), theory.as_bytes())?;
    write_file(&mut files, dir.join("equilibrium.txt"), out.equilibrium.to_text().as_bytes())?;

    if cfg.emit_plots {
        let series: Vec<(String, Vec<(u64, f64)>)> = out
            .runs
            .iter()
            .zip(&out.trajectories)
            .map(|(spec, traj)| (format!("{} {} eta={:e}", spec.run_id, spec.label, spec.eta), traj.err_series()))
            .collect();
        let plot_series: Vec<svg::Series<'_>> =
            series.iter().map(|(label, pts)| svg::Series { label, points: pts }).collect();
        let doc = svg::log_plot("squared distance to equilibrium", "err_sq", &plot_series, cfg.plot_range);
        write_file(&mut files, dir.join("err_sq.svg"), doc.as_bytes())?;
    }
    out.files = files;
    Ok(())
}

/// Runs every (variant, eta) pair of `cfg` and writes `run_<id>.csv`,
/// `summary.csv`, `theory.txt`, `equilibrium.txt`, and optionally `err_sq.svg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let mut out = execute(cfg, plan_runs)?;
    write_common(cfg, &mut out)?;
    Ok(out)
}

/// Like [`run_experiment`] with the run set of [`plan_comparison`], plus a
/// long-format `comparison.csv` keyed by variant label.
pub fn compare_variants(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let mut out = execute(cfg, plan_comparison)?;
    write_common(cfg, &mut out)?;
    let mut csv = String::from("run_id,variant,eta,t,err_sq,z_norm1\n");
    for (spec, traj) in out.runs.iter().zip(&out.trajectories) {
        for pt in &traj.points {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                spec.run_id,
                spec.label,
                fmt_real(spec.eta),
                pt.t,
                pt.err_sq.map_or_else(|| "nan".into(), fmt_real),
                fmt_real(pt.z_norm1)
            ));
        }
    }
    let path = cfg.output_dir.join("comparison.csv");
    let mut files = std::mem::take(&mut out.files);
    write_file(&mut files, path, csv.as_bytes())?;
    out.files = files;
    Ok(out)
}

/// Convenience for callers holding a config path.
pub fn run_experiment_file(path: impl AsRef<Path>) -> Result<ExperimentOutcome, ExperimentError> {
    run_experiment(&ExperimentConfig::from_file(path)?)
}
