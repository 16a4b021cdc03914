//! Experiment configuration: flat `key = value` lines, `#` starts a comment.
//!
//! ```text
//! # market: either a file ...
//! market = markets/toy.txt
//! # ... or a synthetic draw
//! distribution = exponential
//! n = 10
//! m = 20
//! seed = 1
//! utility = linear
//!
//! eta = 2e-5 4e-5 6e-5
//! variant = additive
//! iterations = 200000
//! output_dir = out
//! emit_plots = true
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::demand::{QlIndifference, TieBreak, TieBreakPolicy};
use crate::engine::{Init, RunConfig, Schedule, Variant};
use crate::io::{Distribution, SyntheticSpec};
use crate::market::UtilityKind;
use crate::oracle::{DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MarketSource {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// `eta / sqrt(t + 1)`.
    InvSqrtT,
    /// `1 / sqrt(iterations)`; `eta` is ignored.
    InvSqrtHorizon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub market: MarketSource,
    pub oracle_tol: f64,
    pub oracle_max_iter: u64,
    pub variants: Vec<Variant>,
    pub etas: Vec<f64>,
    pub schedule: ScheduleKind,
    pub iterations: u64,
    pub cap_excess: bool,
    /// Project prices onto the utility-appropriate floor vector.
    pub price_floor: bool,
    pub tie_break: TieBreakPolicy,
    pub init: Init<f64>,
    pub record_every: u64,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
    /// Recorded points averaged by the plateau estimate.
    pub plateau_window: usize,
    /// Explicit `[start, end]` for the slope fit; by default the fit covers the
    /// stretch before the error first drops within twice the plateau.
    pub slope_range: Option<(u64, u64)>,
    /// Zoom window for plots.
    pub plot_range: Option<(u64, u64)>,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// `compare`: also run each variant with capped excess demand and with a constant price floor.
    pub include_modified: bool,
    /// `compare`: the constant used by the price-floor modification.
    pub floor_value: f64,
}

impl ExperimentConfig {
    pub fn new(market: MarketSource, output_dir: impl Into<PathBuf>, etas: Vec<f64>, iterations: u64) -> Self {
        Self {
            market,
            oracle_tol: DEFAULT_TOL,
            oracle_max_iter: DEFAULT_MAX_ITER,
            variants: vec![Variant::Additive],
            etas,
            schedule: ScheduleKind::Constant,
            iterations,
            cap_excess: false,
            price_floor: false,
            tie_break: TieBreakPolicy::default(),
            init: Init::UniformBudget,
            record_every: 0,
            output_dir: output_dir.into(),
            emit_plots: false,
            plateau_window: 100,
            slope_range: None,
            plot_range: None,
            threads: None,
            include_modified: false,
            floor_value: 1e-6,
        }
    }

    pub fn schedule_for(&self, eta: f64) -> Schedule<f64> {
        match self.schedule {
            ScheduleKind::Constant => Schedule::Constant(eta),
            ScheduleKind::InvSqrtT => Schedule::InvSqrtT(eta),
            ScheduleKind::InvSqrtHorizon => Schedule::InvSqrtHorizon(self.iterations),
        }
    }

    /// Engine settings for one (variant, eta) pair. `floor` is the
    /// projection vector used when `price_floor` is set.
    pub fn run_config(&self, variant: Variant, eta: f64, floor: Option<&[f64]>) -> RunConfig<f64> {
        let mut rc = RunConfig::new(self.schedule_for(eta), self.iterations)
            .with_variant(variant)
            .with_init(self.init.clone())
            .with_tie_break(self.tie_break)
            .with_record_every(self.record_every);
        rc.cap_excess = self.cap_excess;
        if self.price_floor {
            rc.price_floor = floor.map(<[f64]>::to_vec);
        }
        rc
    }

    /// `(variant, eta)` for every run, variants outermost.
    pub fn run_grid(&self) -> Vec<(Variant, f64)> {
        let etas: &[f64] = if self.schedule == ScheduleKind::InvSqrtHorizon { &[f64::NAN] } else { &self.etas };
        self.variants.iter().flat_map(|&v| etas.iter().map(move |&e| (v, e))).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.variants.is_empty() {
            return bad("at least one variant is required");
        }
        if self.schedule != ScheduleKind::InvSqrtHorizon && self.etas.is_empty() {
            return bad("at least one eta is required");
        }
        if self.etas.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("every eta must be positive and finite");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.oracle_tol > 0.0) {
            return bad("oracle_tol must be positive");
        }
        if self.plateau_window == 0 {
            return bad("plateau_window must be at least 1");
        }
        if !(self.floor_value > 0.0) {
            return bad("floor_value must be positive");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, crate::experiment::ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::experiment::ExperimentError::Io { path: path.to_path_buf(), source: e })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(Self::parse(&text, base)?)
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut seen = BTreeSet::new();
        let mut market_file = None;
        let mut dist = None;
        let (mut n, mut m, mut seed) = (None, None, 0u64);
        let mut utility = UtilityKind::Linear;
        let mut normalize_budgets = true;
        let mut output_dir = None;
        let mut cfg = ExperimentConfig::new(MarketSource::File(PathBuf::new()), PathBuf::new(), Vec::new(), 0);
        let mut iterations = None;

        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey { line, key: key.into() });
            }
            let bad = |msg: String| ConfigError::BadValue { line, key: key.into(), msg };
            let num =
                |v: &str| -> Result<f64, ConfigError> { v.parse().map_err(|_| bad(format!("`{v}` is not a number"))) };
            let count = |v: &str| -> Result<u64, ConfigError> {
                v.parse().map_err(|_| bad(format!("`{v}` is not a nonnegative integer")))
            };
            let flag = |v: &str| -> Result<bool, ConfigError> {
                match v {
                    "true" | "yes" | "1" => Ok(true),
                    "false" | "no" | "0" => Ok(false),
                    _ => Err(bad(format!("`{v}` is not a boolean"))),
                }
            };
            let pair = |v: &str| -> Result<(u64, u64), ConfigError> {
                let parts: Vec<&str> = v.split_whitespace().collect();
                match parts[..] {
                    [a, b] => {
                        let (a, b) = (count(a)?, count(b)?);
                        if a < b {
                            Ok((a, b))
                        } else {
                            Err(bad("range start must be below its end".into()))
                        }
                    }
                    _ => Err(bad("expected two integers `start end`".into())),
                }
            };
            match key {
                "market" => market_file = Some(base.join(value)),
                "distribution" => dist = Some(Distribution::from_str(value).map_err(|e| bad(e.to_string()))?),
                "n" => n = Some(count(value)? as usize),
                "m" => m = Some(count(value)? as usize),
                "seed" => seed = count(value)?,
                "utility" => utility = value.parse().map_err(|e: crate::market::MarketError| bad(e.to_string()))?,
                "normalize_budgets" => normalize_budgets = flag(value)?,
                "oracle_tol" => cfg.oracle_tol = num(value)?,
                "oracle_max_iter" => cfg.oracle_max_iter = count(value)?,
                "variant" => {
                    cfg.variants = value
                        .split_whitespace()
                        .map(|v| v.parse().map_err(|e: crate::engine::EngineError| bad(e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "eta" => cfg.etas = value.split_whitespace().map(num).collect::<Result<_, _>>()?,
                "schedule" => {
                    cfg.schedule = match value {
                        "constant" => ScheduleKind::Constant,
                        "inv_sqrt_t" => ScheduleKind::InvSqrtT,
                        "inv_sqrt_horizon" => ScheduleKind::InvSqrtHorizon,
                        _ => return Err(bad("expected constant, inv_sqrt_t or inv_sqrt_horizon".into())),
                    }
                }
                "iterations" => iterations = Some(count(value)?),
                "cap_excess" => cfg.cap_excess = flag(value)?,
                "price_floor" => cfg.price_floor = flag(value)?,
                "tie_break" => {
                    cfg.tie_break.rule = match value {
                        "smallest_index" => TieBreak::SmallestIndex,
                        "uniform_split" => TieBreak::UniformSplit,
                        "proportional" => TieBreak::ProportionalToValue,
                        _ => return Err(bad("expected smallest_index, uniform_split or proportional".into())),
                    }
                }
                "ql_indifference" => {
                    cfg.tie_break.ql_indifference = match value {
                        "spend_all" => QlIndifference::SpendAll,
                        "spend_nothing" => QlIndifference::SpendNothing,
                        _ => return Err(bad("expected spend_all or spend_nothing".into())),
                    }
                }
                "mbb_rel_tol" => cfg.tie_break.rel_tol = num(value)?,
                "init" => {
                    cfg.init = match value {
                        "uniform_budget" => Init::UniformBudget,
                        "floor" => Init::FloorVector,
                        list => Init::Explicit(list.split_whitespace().map(num).collect::<Result<_, _>>()?),
                    }
                }
                "record_every" => cfg.record_every = count(value)?,
                "output_dir" => output_dir = Some(base.join(value)),
                "emit_plots" => cfg.emit_plots = flag(value)?,
                "plateau_window" => cfg.plateau_window = count(value)? as usize,
                "slope_range" => cfg.slope_range = Some(pair(value)?),
                "plot_range" => cfg.plot_range = Some(pair(value)?),
                "threads" => cfg.threads = Some(count(value)? as usize),
                "include_modified" => cfg.include_modified = flag(value)?,
                "floor_value" => cfg.floor_value = num(value)?,
                _ => return Err(ConfigError::UnknownKey { line, key: key.into() }),
            }
        }

        cfg.market = match (market_file, dist) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid("give either `market` or `distribution`, not both".into()))
            }
            (Some(path), None) => MarketSource::File(path),
            (None, Some(distribution)) => MarketSource::Synthetic(SyntheticSpec {
                distribution,
                n: n.ok_or(ConfigError::Missing("n"))?,
                m: m.ok_or(ConfigError::Missing("m"))?,
                seed,
                utility,
                normalize_budgets,
            }),
            (None, None) => return Err(ConfigError::Missing("market")),
        };
        cfg.output_dir = output_dir.ok_or(ConfigError::Missing("output_dir"))?;
        cfg.iterations = iterations.ok_or(ConfigError::Missing("iterations"))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
