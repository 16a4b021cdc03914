//! Discrete-time tatonnement: demand, excess demand, price update, repeat.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::demand::{allocate_spend, ql_spends, DemandError, TieBreakPolicy};
use crate::dual::{
    dual_objective, fmt_real, price_bounds, price_floor, stepsize_cap, DualError, PriceBounds, MONITOR_SLACK,
};
use crate::market::{MarketInstance, UtilityKind};
use crate::scalar::{dist_sq, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error("stepsize too large for multiplicative variant (item {item}, step {t})")]
    MultiplicativeNegative { item: usize, t: u64 },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

impl EngineError {
    pub fn is_numerical(&self) -> bool {
        match self {
            EngineError::InvalidConfig(_) => false,
            EngineError::Dual(d) => d.is_numerical(),
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Variant {
    #[default]
    Additive,
    Multiplicative,
    Entropic,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Additive, Variant::Multiplicative, Variant::Entropic];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Additive => "additive",
            Variant::Multiplicative => "multiplicative",
            Variant::Entropic => "entropic",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "additive" | "add" => Ok(Variant::Additive),
            "multiplicative" | "mult" => Ok(Variant::Multiplicative),
            "entropic" | "exp" => Ok(Variant::Entropic),
            other => Err(EngineError::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    /// `1 / sqrt(horizon)` at every step.
    InvSqrtHorizon(u64),
    /// `c / sqrt(t + 1)`.
    InvSqrtT(T),
}

impl<T: Scalar> Schedule<T> {
    /// Largest stepsize the schedule ever takes.
    pub fn max_eta(&self) -> T {
        stepsize_at(self, 0)
    }
}

#[inline]
pub fn stepsize_at<T: Scalar>(schedule: &Schedule<T>, t: u64) -> T {
    match *schedule {
        Schedule::Constant(eta) => eta,
        Schedule::InvSqrtHorizon(h) => T::one() / T::lit(h as f64).sqrt(),
        Schedule::InvSqrtT(c) => c / T::lit((t + 1) as f64).sqrt(),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum Init<T> {
    /// `p_j = (sum_i B_i) / m`.
    #[default]
    UniformBudget,
    /// The utility-appropriate price floor.
    FloorVector,
    Explicit(Vec<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig<T> {
    pub variant: Variant,
    /// Replace `z_j` by `min{z_j, 1}` before updating.
    pub cap_excess: bool,
    /// Project `p_j` up to `max{p_j, floor_j}` after every update.
    pub price_floor: Option<Vec<T>>,
    pub schedule: Schedule<T>,
    pub iterations: u64,
    pub tie_break: TieBreakPolicy,
    pub init: Init<T>,
    /// Recording stride; zero picks `max(1, iterations / 5000)`.
    pub record_every: u64,
}

impl<T: Scalar> RunConfig<T> {
    pub fn new(schedule: Schedule<T>, iterations: u64) -> Self {
        Self {
            variant: Variant::Additive,
            cap_excess: false,
            price_floor: None,
            schedule,
            iterations,
            tie_break: TieBreakPolicy::default(),
            init: Init::UniformBudget,
            record_every: 0,
        }
    }

    pub fn constant(eta: T, iterations: u64) -> Self {
        Self::new(Schedule::Constant(eta), iterations)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_init(mut self, init: Init<T>) -> Self {
        self.init = init;
        self
    }

    pub fn with_record_every(mut self, every: u64) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_tie_break(mut self, policy: TieBreakPolicy) -> Self {
        self.tie_break = policy;
        self
    }

    pub fn effective_record_every(&self) -> u64 {
        if self.record_every > 0 {
            self.record_every
        } else {
            (self.iterations / 5000).max(1)
        }
    }

    fn validate(&self, m: usize) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        let ok_eta = match self.schedule {
            Schedule::Constant(eta) | Schedule::InvSqrtT(eta) => eta > T::zero() && eta.is_finite(),
            Schedule::InvSqrtHorizon(h) => h >= 1,
        };
        if !ok_eta {
            return bad("stepsize must be positive".into());
        }
        if let Init::Explicit(p) = &self.init {
            if p.len() != m {
                return bad(format!("initial prices have length {}, expected {m}", p.len()));
            }
            if p.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
                return bad("initial prices must be finite and nonnegative".into());
            }
        }
        if let Some(f) = &self.price_floor {
            if f.len() != m {
                return bad(format!("price floor has length {}, expected {m}", f.len()));
            }
        }
        Ok(())
    }
}

/// One update. `p` and `z` must have equal length.
pub fn step<T: Scalar>(
    p: &[T],
    z: &[T],
    eta: T,
    variant: Variant,
    cap_excess: bool,
    price_floor: Option<&[T]>,
) -> Result<Vec<T>, EngineError> {
    let mut next = p.to_vec();
    step_in_place(&mut next, z, eta, variant, cap_excess, price_floor)
        .map_err(|item| EngineError::MultiplicativeNegative { item, t: 0 })?;
    Ok(next)
}

/// The price update for one item. Returns the new price and whether the
/// additive clamp at zero fired, or `None` for a negative multiplicative update.
#[inline(always)]
fn update_price<T: Scalar>(pj: T, zj: T, eta: T, variant: Variant, cap_excess: bool) -> Option<(T, bool)> {
    let zj = if cap_excess { zj.min(T::one()) } else { zj };
    match variant {
        Variant::Additive => {
            let v = pj + eta * zj;
            if v < T::zero() {
                Some(clamped_at_zero())
            } else {
                Some((v, false))
            }
        }
        Variant::Multiplicative => {
            let v = pj * (T::one() + eta * zj);
            if v < T::zero() {
                None
            } else {
                Some((v, false))
            }
        }
        Variant::Entropic => Some((pj * (eta * zj).exp(), false)),
    }
}

// Out of line so the compiler keeps a predicted branch instead of a select
// on the price dependency chain.
#[cold]
#[inline(never)]
fn clamped_at_zero<T: Scalar>() -> (T, bool) {
    (T::zero(), true)
}

/// Updates `p` in place and returns how many additive updates were clamped at zero.
/// On a negative multiplicative update returns the offending item.
#[inline]
fn step_in_place<T: Scalar>(
    p: &mut [T],
    z: &[T],
    eta: T,
    variant: Variant,
    cap_excess: bool,
    price_floor: Option<&[T]>,
) -> Result<u64, usize> {
    let mut clamped = 0;
    for (j, (pj, &zj)) in p.iter_mut().zip(z).enumerate() {
        let (v, hit) = update_price(*pj, zj, eta, variant, cap_excess).ok_or(j)?;
        clamped += u64::from(hit);
        *pj = v;
    }
    if let Some(f) = price_floor {
        for (pj, &fj) in p.iter_mut().zip(f) {
            *pj = pj.max(fj);
        }
    }
    Ok(clamped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint<T> {
    pub t: u64,
    pub prices: Vec<T>,
    /// `||p - p*||^2` when the equilibrium was supplied.
    pub err_sq: Option<T>,
    pub phi: T,
    pub z_norm1: T,
    pub min_price: T,
    pub max_price: T,
    /// Bound violations seen up to and including this step.
    pub violations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub points: Vec<TrajectoryPoint<T>>,
    /// Whether the bound monitor ran. It only runs for additive, uncapped,
    /// unfloored runs with a compliant stepsize started at or above the floor.
    pub monitored: bool,
    pub violations: u64,
    /// Number of additive updates clamped at zero.
    pub projections: u64,
    pub final_prices: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn err_series(&self) -> Vec<(u64, T)> {
        self.points.iter().filter_map(|pt| pt.err_sq.map(|e| (pt.t, e))).collect()
    }

    /// Header `t,err_sq,phi,z_norm1,min_price,max_price,violations`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,err_sq,phi,z_norm1,min_price,max_price,violations")?;
        for pt in &self.points {
            let err = pt.err_sq.map_or_else(|| "nan".to_string(), fmt_real);
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                pt.t,
                err,
                fmt_real(pt.phi),
                fmt_real(pt.z_norm1),
                fmt_real(pt.min_price),
                fmt_real(pt.max_price),
                pt.violations
            )?;
        }
        Ok(())
    }

    /// Wide format, header `t,p_0,...,p_{m-1}`.
    pub fn write_prices_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let m = self.final_prices.len();
        let mut header = String::from("t");
        for j in 0..m {
            header.push_str(&format!(",p_{j}"));
        }
        writeln!(w, "{header}")?;
        for pt in &self.points {
            write!(w, "{}", pt.t)?;
            for &pj in &pt.prices {
                write!(w, ",{}", fmt_real(pj))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn initial_prices<T: Scalar>(inst: &MarketInstance<T>, init: &Init<T>) -> Vec<T> {
    match init {
        Init::UniformBudget => vec![inst.total_budget() / T::from_usize_lossy(inst.m()); inst.m()],
        Init::FloorVector => price_floor(inst),
        Init::Explicit(p) => p.clone(),
    }
}

/// Per-buyer demand rule resolved once per run. Buyers valuing a single item
/// skip the general MBB search; the arithmetic matches `aggregate_demand` exactly.
enum BuyerPlan<T> {
    Single { item: usize, budget: T, value: T },
    General(usize),
}

struct DemandPlan<T> {
    buyers: Vec<BuyerPlan<T>>,
    quasi_linear: bool,
}

impl<T: Scalar> DemandPlan<T> {
    fn new(inst: &MarketInstance<T>) -> Self {
        let buyers = (0..inst.n())
            .map(|i| match *inst.support(i) {
                [item] => BuyerPlan::Single { item, budget: inst.budget(i), value: inst.value(i, item) },
                _ => BuyerPlan::General(i),
            })
            .collect();
        Self { buyers, quasi_linear: inst.utility() == UtilityKind::QuasiLinear }
    }

    fn fill(
        &self,
        inst: &MarketInstance<T>,
        p: &[T],
        policy: &TieBreakPolicy,
        demand: &mut [T],
    ) -> Result<(), DemandError> {
        demand.iter_mut().for_each(|d| *d = T::zero());
        for (buyer, plan) in self.buyers.iter().enumerate() {
            match *plan {
                BuyerPlan::Single { item, budget, value } => {
                    let price = p[item];
                    if !(price > T::zero()) {
                        return Err(DemandError::UnboundedDemand { buyer, item, price: price.as_f64() });
                    }
                    if self.quasi_linear && !ql_spends(price / value, policy) {
                        continue;
                    }
                    demand[item] = demand[item] + budget / price;
                }
                BuyerPlan::General(i) => {
                    allocate_spend(inst, i, p, policy, self.quasi_linear, |k, s| {
                        demand[k] = demand[k] + s / p[k];
                    })?;
                }
            }
        }
        Ok(())
    }

    /// When every buyer values exactly one item, demand for item `j` depends on
    /// `p_j` alone. Returns, per item, its buyers as `(buyer, budget, value)` in index order.
    fn separable(&self) -> Option<Vec<Vec<(usize, T, T)>>> {
        let m = self.buyers.iter().map(|b| match *b {
            BuyerPlan::Single { item, .. } => item + 1,
            BuyerPlan::General(_) => 0,
        });
        let width = m.max().unwrap_or(0);
        let mut owners = vec![Vec::new(); width];
        for (buyer, plan) in self.buyers.iter().enumerate() {
            match *plan {
                BuyerPlan::Single { item, budget, value } => owners[item].push((buyer, budget, value)),
                BuyerPlan::General(_) => return None,
            }
        }
        Some(owners)
    }
}

/// Monitor thresholds with the slack already applied, so the per-step check
/// is a handful of comparisons.
struct MonitorLimits<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    grad_sq: T,
}

impl<T: Scalar> MonitorLimits<T> {
    fn new(bounds: &PriceBounds<T>) -> Self {
        let slack = T::lit(MONITOR_SLACK);
        let g = bounds.grad_bound + slack;
        Self {
            lower: bounds.price_lower.iter().map(|&x| x - slack).collect(),
            upper: bounds.price_upper.iter().map(|&x| x + slack).collect(),
            grad_sq: g * g,
        }
    }
}

/// Everything a stretch of unrecorded steps needs.
struct Stepper<'a, T> {
    inst: &'a MarketInstance<T>,
    config: &'a RunConfig<T>,
    plan: DemandPlan<T>,
    separable: Option<Vec<Vec<(usize, T, T)>>>,
    limits: Option<MonitorLimits<T>>,
    demand: Vec<T>,
    z: Vec<T>,
    violations: u64,
    projections: u64,
}

impl<'a, T: Scalar> Stepper<'a, T> {
    fn eta(&self, t: u64) -> T {
        stepsize_at(&self.config.schedule, t)
    }

    /// Demand and excess demand at `p` into the scratch buffers, plus the monitor.
    fn evaluate(&mut self, p: &[T]) -> Result<(), EngineError> {
        self.plan.fill(self.inst, p, &self.config.tie_break, &mut self.demand)?;
        for (zj, &dj) in self.z.iter_mut().zip(&self.demand) {
            *zj = dj - T::one();
        }
        if let Some(lim) = &self.limits {
            let mut count = 0;
            let mut norm_sq = T::zero();
            for (j, (&pj, &zj)) in p.iter().zip(&self.z).enumerate() {
                count += u64::from(pj < lim.lower[j]) + u64::from(pj > lim.upper[j]);
                norm_sq = norm_sq + zj * zj;
            }
            self.violations += count + u64::from(norm_sq > lim.grad_sq);
        }
        Ok(())
    }

    fn apply(&mut self, p: &mut [T], t: u64) -> Result<(), EngineError> {
        let cfg = self.config;
        self.projections +=
            step_in_place(p, &self.z, self.eta(t), cfg.variant, cfg.cap_excess, cfg.price_floor.as_deref())
                .map_err(|item| EngineError::MultiplicativeNegative { item, t })?;
        Ok(())
    }

    /// Steps `t0 .. t0 + count`, each evaluating demand, monitoring, and updating.
    fn advance(&mut self, p: &mut [T], t0: u64, count: u64) -> Result<(), EngineError> {
        if count == 0 {
            return Ok(());
        }
        if self.separable.is_some() {
            return match p.len() {
                1 => self.advance_fixed::<1>(p, t0, count),
                2 => self.advance_fixed::<2>(p, t0, count),
                3 => self.advance_fixed::<3>(p, t0, count),
                4 => self.advance_fixed::<4>(p, t0, count),
                _ => self.advance_separable(p, t0, count),
            };
        }
        for t in t0..t0 + count {
            self.evaluate(p)?;
            self.apply(p, t)?;
        }
        Ok(())
    }

    /// Small separable markets keep the price vector in a fixed-size local array.
    fn advance_fixed<const M: usize>(&mut self, p: &mut [T], t0: u64, count: u64) -> Result<(), EngineError> {
        let mut local = [T::zero(); M];
        local.copy_from_slice(p);
        let cfg = self.config;
        let plain = cfg.variant == Variant::Additive && !cfg.cap_excess && cfg.price_floor.is_none();
        let single = self.separable.as_deref().and_then(|owners| {
            let mut budgets = [T::zero(); M];
            for (b, own) in budgets.iter_mut().zip(owners) {
                match own[..] {
                    [(_, budget, _)] => *b = budget,
                    _ => return None,
                }
            }
            Some(budgets)
        });
        let result = match (single, &cfg.schedule) {
            (Some(budgets), &Schedule::Constant(eta)) if plain && !self.plan.quasi_linear => {
                self.single_owner_steps(&mut local, &budgets, eta, count)
            }
            _ => self.advance_separable(&mut local, t0, count),
        };
        p.copy_from_slice(&local);
        result
    }

    /// One linear buyer per item, constant additive stepsize: the whole state
    /// fits in registers. Same values as the general separable loop.
    #[inline(never)]
    fn single_owner_steps<const M: usize>(
        &mut self,
        p: &mut [T; M],
        budgets: &[T; M],
        eta: T,
        count: u64,
    ) -> Result<(), EngineError> {
        let owners = self.separable.as_deref().unwrap_or(&[]);
        let limits = self.limits.as_ref();
        let mut violations = 0u64;
        let mut projections = 0u64;
        let mut outcome = Ok(());
        let mut q = *p;
        'steps: for _ in 0..count {
            let mut norm_sq = T::zero();
            let mut count = 0u64;
            for j in 0..M {
                let pj = q[j];
                if !(pj > T::zero()) {
                    let buyer = owners[j][0].0;
                    outcome = Err(DemandError::UnboundedDemand { buyer, item: j, price: pj.as_f64() }.into());
                    break 'steps;
                }
                let zj = budgets[j] / pj - T::one();
                if let Some(lim) = limits {
                    count += u64::from(pj < lim.lower[j]) + u64::from(pj > lim.upper[j]);
                    norm_sq = norm_sq + zj * zj;
                }
                let (v, hit) = update_price(pj, zj, eta, Variant::Additive, false).unwrap_or_else(clamped_at_zero);
                projections += u64::from(hit);
                q[j] = v;
            }
            if limits.is_some_and(|lim| norm_sq > lim.grad_sq) {
                count += 1;
            }
            violations += count;
        }
        *p = q;
        self.violations += violations;
        self.projections += projections;
        outcome
    }

    #[inline(always)]
    fn advance_separable(&mut self, p: &mut [T], t0: u64, count: u64) -> Result<(), EngineError> {
        let owners = self.separable.as_deref().unwrap_or(&[]);
        let (mut violations, mut projections) = (0, 0);
        let cfg = self.config;
        let steps = t0..t0 + count;
        let limits = self.limits.as_ref();
        let ql = self.plan.quasi_linear;
        let result = if cfg.variant == Variant::Additive && !cfg.cap_excess && cfg.price_floor.is_none() {
            let plain = |pj: T, zj: T, eta: T, _: usize| update_price(pj, zj, eta, Variant::Additive, false);
            separable_steps(p, owners, limits, cfg, ql, steps, plain, &mut violations, &mut projections)
        } else {
            let floor = cfg.price_floor.as_deref();
            let general = |pj: T, zj: T, eta: T, j: usize| {
                update_price(pj, zj, eta, cfg.variant, cfg.cap_excess).map(|(v, hit)| match floor {
                    Some(f) => (v.max(f[j]), hit),
                    None => (v, hit),
                })
            };
            separable_steps(p, owners, limits, cfg, ql, steps, general, &mut violations, &mut projections)
        };
        self.violations += violations;
        self.projections += projections;
        result
    }
}

/// Fused demand, monitor, and update per item for markets where every buyer
/// values one item. Produces the same values as `evaluate` followed by `apply`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn separable_steps<T: Scalar>(
    p: &mut [T],
    owners: &[Vec<(usize, T, T)>],
    limits: Option<&MonitorLimits<T>>,
    cfg: &RunConfig<T>,
    ql: bool,
    steps: std::ops::Range<u64>,
    update: impl Fn(T, T, T, usize) -> Option<(T, bool)>,
    violations_out: &mut u64,
    projections_out: &mut u64,
) -> Result<(), EngineError> {
    let policy = cfg.tie_break;
    let constant = match cfg.schedule {
        Schedule::Constant(eta) => Some(eta),
        _ => None,
    };
    let mut violations = 0u64;
    let mut projections = 0u64;
    let mut outcome = Ok(());
    'steps: for t in steps {
        let eta = constant.unwrap_or_else(|| stepsize_at(&cfg.schedule, t));
        let mut count = 0u64;
        let mut norm_sq = T::zero();
        for j in 0..p.len() {
            let pj = p[j];
            let own = &owners[j][..];
            if !(pj > T::zero()) {
                let buyer = own.first().map_or(0, |o| o.0);
                outcome = Err(DemandError::UnboundedDemand { buyer, item: j, price: pj.as_f64() }.into());
                break 'steps;
            }
            let d = if ql {
                own.iter().fold(
                    T::zero(),
                    |d, &(_, budget, value)| {
                        if ql_spends(pj / value, &policy) {
                            d + budget / pj
                        } else {
                            d
                        }
                    },
                )
            } else if let [(_, first, _), rest @ ..] = own {
                // `0 + x == x` for the positive `x` here, so starting from the
                // first share instead of zero is exact.
                rest.iter().fold(*first / pj, |d, &(_, budget, _)| d + budget / pj)
            } else {
                T::zero()
            };
            let zj = d - T::one();
            if let Some(lim) = limits {
                if pj < lim.lower[j] || pj > lim.upper[j] {
                    count += u64::from(pj < lim.lower[j]) + u64::from(pj > lim.upper[j]);
                }
                norm_sq = norm_sq + zj * zj;
            }
            let Some((v, hit)) = update(pj, zj, eta, j) else {
                outcome = Err(EngineError::MultiplicativeNegative { item: j, t });
                break 'steps;
            };
            if hit {
                projections += 1;
            }
            p[j] = v;
        }
        if let Some(lim) = limits {
            if norm_sq > lim.grad_sq {
                count += 1;
            }
            violations += count;
        }
    }
    *violations_out = violations;
    *projections_out = projections;
    outcome
}

/// Bounds to monitor, or `None` when the run is outside the regime they cover.
fn monitor_bounds<T: Scalar>(
    inst: &MarketInstance<T>,
    config: &RunConfig<T>,
    p0: &[T],
) -> Result<Option<PriceBounds<T>>, EngineError> {
    if config.variant != Variant::Additive || config.cap_excess || config.price_floor.is_some() {
        return Ok(None);
    }
    let floor = price_floor(inst);
    let eta = config.schedule.max_eta();
    if !(eta < stepsize_cap(&floor)) || p0.iter().zip(&floor).any(|(&p, &f)| p < f) {
        return Ok(None);
    }
    Ok(Some(price_bounds(inst, eta)?))
}

/// Runs `config.iterations` updates. Demand is evaluated at every step
/// `0..=iterations`; step 0, every `record_every`-th step, and the last step are recorded.
pub fn run<T: Scalar>(
    inst: &MarketInstance<T>,
    config: &RunConfig<T>,
    p_star: Option<&[T]>,
) -> Result<Trajectory<T>, EngineError> {
    run_with(inst, config, p_star, true)
}

fn run_with<T: Scalar>(
    inst: &MarketInstance<T>,
    config: &RunConfig<T>,
    p_star: Option<&[T]>,
    allow_fused: bool,
) -> Result<Trajectory<T>, EngineError> {
    let m = inst.m();
    config.validate(m)?;
    if let Some(ps) = p_star {
        if ps.len() != m {
            return Err(EngineError::InvalidConfig(format!("equilibrium has length {}, expected {m}", ps.len())));
        }
    }
    if config.init == Init::FloorVector {
        let cap = stepsize_cap(&price_floor(inst));
        let eta = config.schedule.max_eta();
        if !(eta < cap) {
            return Err(DualError::StepsizeTooLarge { eta: eta.as_f64(), cap: cap.as_f64() }.into());
        }
    }

    let mut p = initial_prices(inst, &config.init);
    let bounds = monitor_bounds(inst, config, &p)?;
    let plan = DemandPlan::new(inst);
    let separable = plan.separable().filter(|o| allow_fused && o.len() == m);
    let mut stepper = Stepper {
        inst,
        config,
        plan,
        separable,
        limits: bounds.as_ref().map(MonitorLimits::new),
        demand: vec![T::zero(); m],
        z: vec![T::zero(); m],
        violations: 0,
        projections: 0,
    };
    let every = config.effective_record_every();
    let mut points = Vec::with_capacity((config.iterations / every + 2) as usize);

    let mut t = 0u64;
    loop {
        stepper.evaluate(&p)?;
        let z = &stepper.z;
        points.push(TrajectoryPoint {
            t,
            prices: p.clone(),
            err_sq: p_star.map(|ps| dist_sq(&p, ps)),
            phi: dual_objective(inst, &p)?,
            z_norm1: z.iter().fold(T::zero(), |acc, &x| acc + x.abs()),
            min_price: p.iter().copied().fold(T::infinity(), T::min),
            max_price: p.iter().copied().fold(T::neg_infinity(), T::max),
            violations: stepper.violations,
        });
        if t == config.iterations {
            break;
        }
        stepper.apply(&mut p, t)?;
        t += 1;
        let quiet = (every - 1).min(config.iterations - t);
        stepper.advance(&mut p, t, quiet)?;
        t += quiet;
    }

    Ok(Trajectory {
        points,
        monitored: bounds.is_some(),
        violations: stepper.violations,
        projections: stepper.projections,
        final_prices: p,
    })
}
