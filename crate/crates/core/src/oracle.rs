//! Reference equilibria: proportional response (PR) dynamics for linear and
//! quasi-linear markets, KKT residuals, a grid-search oracle for tiny
//! markets, and an approximate-equilibrium checker.
//!
//! Bid matrices are row-major. Quasi-linear bids carry one extra column per
//! buyer holding unspent money, modelled as a pseudo-item with price one and
//! value one.

use std::fmt;

use thiserror::Error;

use crate::demand::min_ratio;
use crate::dual::{dual_objective, fmt_real, fmt_reals, price_floor};
use crate::market::{MarketInstance, UtilityKind};
use crate::scalar::{max_of, min_of, Scalar};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("item {item} received no bids")]
    ZeroColumn { item: usize },
    #[error("buyer {buyer} derives no utility from the current bids")]
    ZeroUtility { buyer: usize },
    #[error("bid matrix has {got} entries, expected {expected}")]
    BadShape { got: usize, expected: usize },
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("proportional response did not converge in {max_iter} iterations")]
    NoConvergence { max_iter: u64 },
    #[error("KKT residuals too large after convergence: {0}")]
    KktFailed(String),
    #[error("grid search needs at most two items, got {m}")]
    TooManyItems { m: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktReport<T> {
    /// `max_j |sum_i x_ij - 1|`.
    pub clearing_residual: T,
    /// Largest `(b_ij / B_i) * (ratio_ij / r_i - 1)` over positive spends, where
    /// `r_i` is the buyer's best ratio (capped at one for quasi-linear buyers).
    pub mbb_residual: T,
    /// `max_i |spend_i + leftover_i - B_i| / B_i`.
    pub budget_residual: T,
    /// `max_i (y_i / B_i) * max(0, 1 - r_i)`: money kept while items are worth buying.
    pub ql_leftover_residual: T,
}

impl<T: Scalar> KktReport<T> {
    pub fn max_residual(&self) -> T {
        self.clearing_residual.max(self.mbb_residual).max(self.budget_residual).max(self.ql_leftover_residual)
    }
}

impl<T: Scalar> fmt::Display for KktReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "clearing={:e} mbb={:e} budget={:e} leftover={:e}",
            self.clearing_residual.as_f64(),
            self.mbb_residual.as_f64(),
            self.budget_residual.as_f64(),
            self.ql_leftover_residual.as_f64()
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumResult<T> {
    pub p_star: Vec<T>,
    /// Row-major `n x m` allocation.
    pub x_star: Vec<T>,
    /// Unspent money per buyer; all zero for linear markets.
    pub leftovers: Vec<T>,
    pub kkt: KktReport<T>,
    pub iterations_used: u64,
}

impl<T: Scalar> EquilibriumResult<T> {
    pub fn to_text(&self) -> String {
        format!(
            "p_star={}\nkkt_clearing={}\nkkt_mbb={}\niters={}\n",
            fmt_reals(&self.p_star),
            fmt_real(self.kkt.clearing_residual),
            fmt_real(self.kkt.mbb_residual),
            self.iterations_used
        )
    }
}

/// Reads the `p_star=` line of [`EquilibriumResult::to_text`] output.
pub fn parse_p_star(text: &str) -> Option<Vec<f64>> {
    let line = text.lines().find_map(|l| l.trim().strip_prefix("p_star="))?;
    line.split_whitespace().map(|s| s.parse().ok()).collect()
}

fn check_shape(got: usize, expected: usize) -> Result<(), OracleError> {
    if got == expected {
        Ok(())
    } else {
        Err(OracleError::BadShape { got, expected })
    }
}

/// Column sums over the first `m` columns of an `n x width` bid matrix.
fn column_prices<T: Scalar>(bids: &[T], n: usize, m: usize, width: usize, out: &mut [T]) -> Result<(), OracleError> {
    out.iter_mut().for_each(|p| *p = T::zero());
    for i in 0..n {
        for j in 0..m {
            out[j] = out[j] + bids[i * width + j];
        }
    }
    match out.iter().position(|&p| !(p > T::zero())) {
        Some(item) => Err(OracleError::ZeroColumn { item }),
        None => Ok(()),
    }
}

/// One PR update into `next`; `prices` receives the prices the update was computed at.
fn pr_update<T: Scalar>(
    inst: &MarketInstance<T>,
    bids: &[T],
    quasi_linear: bool,
    prices: &mut [T],
    next: &mut [T],
) -> Result<(), OracleError> {
    let (n, m) = (inst.n(), inst.m());
    let width = if quasi_linear { m + 1 } else { m };
    column_prices(bids, n, m, width, prices)?;
    for i in 0..n {
        let row = inst.row(i);
        let b = &bids[i * width..(i + 1) * width];
        let mut u = T::zero();
        for j in 0..m {
            u = u + row[j] * b[j] / prices[j];
        }
        if quasi_linear {
            u = u + b[m];
        }
        if !(u > T::zero()) {
            return Err(OracleError::ZeroUtility { buyer: i });
        }
        let scale = inst.budget(i) / u;
        let out = &mut next[i * width..(i + 1) * width];
        for j in 0..m {
            out[j] = scale * row[j] * b[j] / prices[j];
        }
        if quasi_linear {
            out[m] = scale * b[m];
        }
    }
    Ok(())
}

/// `b'_ij = B_i v_ij x_ij / <v_i, x_i>` with `x_ij = b_ij / p_j` and `p_j = sum_i b_ij`.
pub fn pr_step_linear<T: Scalar>(inst: &MarketInstance<T>, bids: &[T]) -> Result<Vec<T>, OracleError> {
    check_shape(bids.len(), inst.n() * inst.m())?;
    let mut prices = vec![T::zero(); inst.m()];
    let mut next = vec![T::zero(); bids.len()];
    pr_update(inst, bids, false, &mut prices, &mut next)?;
    Ok(next)
}

/// Quasi-linear PR on `n x (m + 1)` bids; column `m` is money kept.
pub fn pr_step_ql<T: Scalar>(inst: &MarketInstance<T>, bids: &[T]) -> Result<Vec<T>, OracleError> {
    check_shape(bids.len(), inst.n() * (inst.m() + 1))?;
    let mut prices = vec![T::zero(); inst.m()];
    let mut next = vec![T::zero(); bids.len()];
    pr_update(inst, bids, true, &mut prices, &mut next)?;
    Ok(next)
}

/// Starting bids: money split over valued items in proportion to value; a
/// quasi-linear buyer first sets aside `B_i / (m + 1)` as kept money.
pub fn initial_bids<T: Scalar>(inst: &MarketInstance<T>) -> Vec<T> {
    let (n, m) = (inst.n(), inst.m());
    let ql = inst.utility() == UtilityKind::QuasiLinear;
    let width = if ql { m + 1 } else { m };
    let keep_share = if ql { T::one() / T::from_usize_lossy(m + 1) } else { T::zero() };
    let mut bids = vec![T::zero(); n * width];
    for i in 0..n {
        let row = inst.row(i);
        let total: T = row.iter().copied().sum();
        let budget = inst.budget(i);
        let spend = budget * (T::one() - keep_share);
        for j in 0..m {
            bids[i * width + j] = spend * row[j] / total;
        }
        if ql {
            bids[i * width + m] = budget * keep_share;
        }
    }
    bids
}

/// KKT residuals of a price/allocation/leftover triple.
pub fn kkt_report<T: Scalar>(inst: &MarketInstance<T>, p: &[T], x: &[T], leftovers: &[T]) -> KktReport<T> {
    let (n, m) = (inst.n(), inst.m());
    let ql = inst.utility() == UtilityKind::QuasiLinear;
    let mut clearing = T::zero();
    for j in 0..m {
        let sold = (0..n).fold(T::zero(), |acc, i| acc + x[i * m + j]);
        clearing = clearing.max((sold - T::one()).abs());
    }
    let mut mbb = T::zero();
    let mut budget_res = T::zero();
    let mut leftover_res = T::zero();
    for i in 0..n {
        let b = inst.budget(i);
        let row = inst.row(i);
        let mut r = min_ratio(inst, i, p).unwrap_or(T::infinity());
        if ql {
            leftover_res = leftover_res.max(leftovers[i] / b * (T::one() - r).max(T::zero()));
            r = r.min(T::one());
        }
        let mut spent = T::zero();
        for j in 0..m {
            let s = p[j] * x[i * m + j];
            spent = spent + s;
            if s > T::zero() {
                let gap = if row[j] > T::zero() { p[j] / row[j] / r - T::one() } else { T::infinity() };
                mbb = mbb.max(s / b * gap.max(T::zero()));
            }
        }
        budget_res = budget_res.max((spent + leftovers[i] - b).abs() / b);
    }
    KktReport {
        clearing_residual: clearing,
        mbb_residual: mbb,
        budget_residual: budget_res,
        ql_leftover_residual: leftover_res,
    }
}

/// Runs PR until `max_j |p'_j - p_j| < tol * max_j p_j` and every KKT
/// residual is at most `100 * tol`. Running out of iterations is an error:
/// [`OracleError::KktFailed`] if prices had settled, otherwise
/// [`OracleError::NoConvergence`].
pub fn solve_equilibrium<T: Scalar>(
    inst: &MarketInstance<T>,
    tol: T,
    max_iter: u64,
) -> Result<EquilibriumResult<T>, OracleError> {
    if !(tol > T::zero()) {
        return Err(OracleError::BadTolerance);
    }
    let (n, m) = (inst.n(), inst.m());
    let ql = inst.utility() == UtilityKind::QuasiLinear;
    let width = if ql { m + 1 } else { m };
    let mut bids = initial_bids(inst);
    let mut next = vec![T::zero(); bids.len()];
    let mut prices = vec![T::zero(); m];
    let mut next_prices = vec![T::zero(); m];

    let limit = T::lit(100.0) * tol;
    let mut last_kkt = None;
    let mut iterations = 0;
    while iterations < max_iter {
        pr_update(inst, &bids, ql, &mut prices, &mut next)?;
        std::mem::swap(&mut bids, &mut next);
        iterations += 1;
        column_prices(&bids, n, m, width, &mut next_prices)?;
        let moved = prices.iter().zip(&next_prices).fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        if !(moved < tol * max_of(&prices)) {
            continue;
        }
        // Prices can stall momentarily at a turning point well before the bids
        // settle, so small movement alone does not end the search.
        let (x_star, leftovers) = split_bids(&bids, &next_prices, n, m, ql);
        let kkt = kkt_report(inst, &next_prices, &x_star, &leftovers);
        if kkt.max_residual() <= limit {
            return Ok(EquilibriumResult { p_star: next_prices, x_star, leftovers, kkt, iterations_used: iterations });
        }
        last_kkt = Some(kkt);
    }
    match last_kkt {
        Some(kkt) => Err(OracleError::KktFailed(kkt.to_string())),
        None => Err(OracleError::NoConvergence { max_iter }),
    }
}

/// Allocation `x_ij = b_ij / p_j` and kept money from a bid matrix.
fn split_bids<T: Scalar>(bids: &[T], p: &[T], n: usize, m: usize, ql: bool) -> (Vec<T>, Vec<T>) {
    let width = if ql { m + 1 } else { m };
    let mut x = vec![T::zero(); n * m];
    let mut leftovers = vec![T::zero(); n];
    for i in 0..n {
        for j in 0..m {
            x[i * m + j] = bids[i * width + j] / p[j];
        }
        if ql {
            leftovers[i] = bids[i * width + m];
        }
    }
    (x, leftovers)
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![(lo * hi).sqrt()];
    }
    let step = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|k| lo * (step * k as f64).exp()).collect()
}

/// Minimizes the dual objective over a log-spaced grid of `grid_points` per
/// item on `[min_j floor_j / 2, 2 B]`, then once more on a grid ten times
/// finer spanning the neighbouring cells of the best point. Items `m <= 2`.
pub fn brute_force_prices<T: Scalar>(inst: &MarketInstance<T>, grid_points: usize) -> Result<Vec<T>, OracleError> {
    let m = inst.m();
    if m > 2 {
        return Err(OracleError::TooManyItems { m });
    }
    let lo = min_of(&price_floor(inst)).as_f64() / 2.0;
    let hi = 2.0 * inst.total_budget().as_f64();
    let points = grid_points.max(2);
    let coarse = log_grid(lo, hi, points);
    let ratio = (hi / lo).powf(1.0 / (points - 1) as f64);

    let eval = |p: &[f64]| -> f64 {
        let q: Vec<T> = p.iter().map(|&x| T::lit(x)).collect();
        dual_objective(inst, &q).map_or(f64::INFINITY, |v| v.as_f64())
    };
    let search = |axes: &[Vec<f64>]| -> Vec<f64> {
        let mut best = (f64::INFINITY, vec![axes[0][0]; m]);
        let mut idx = vec![0usize; m];
        loop {
            let p: Vec<f64> = idx.iter().enumerate().map(|(d, &k)| axes[d][k]).collect();
            let v = eval(&p);
            if v < best.0 {
                best = (v, p);
            }
            let mut d = 0;
            while d < m {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == m {
                return best.1;
            }
        }
    };

    let axes = vec![coarse; m];
    let best = search(&axes);
    let fine: Vec<Vec<f64>> = best.iter().map(|&c| log_grid(c / ratio, c * ratio, 21)).collect();
    Ok(search(&fine).into_iter().map(T::lit).collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApproxViolation {
    /// `<p, x_i> > B_i`.
    Budget { buyer: usize },
    /// Utility below `(1 - eps)` times the best achievable with budget `(1 - eps) B_i`.
    Utility { buyer: usize },
    /// Item sold outside `[1 - eps, 1]`.
    Clearing { item: usize },
}

impl fmt::Display for ApproxViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApproxViolation::Budget { buyer } => write!(f, "buyer {buyer} overspends"),
            ApproxViolation::Utility { buyer } => write!(f, "buyer {buyer} is not approximately optimal"),
            ApproxViolation::Clearing { item } => write!(f, "item {item} is not approximately cleared"),
        }
    }
}

/// Relative slack applied to every comparison in [`approx_equilibrium_check`].
pub const APPROX_SLACK: f64 = 1e-12;

/// Checks `(p, x)` against the `eps`-approximate equilibrium conditions and
/// returns the first violated clause. Budgets are checked for every buyer
/// first, then utilities, then clearing.
///
/// A quasi-linear buyer's utility is `<v_i - p, x_i>`; the best achievable with
/// budget `(1 - eps) B_i` is `(1 - eps) B_i (1 / r_i - 1)` when the best ratio
/// `r_i` is below one and zero otherwise.
pub fn approx_equilibrium_check<T: Scalar>(
    inst: &MarketInstance<T>,
    p: &[T],
    x: &[T],
    epsilon: T,
) -> Result<(), ApproxViolation> {
    let (n, m) = (inst.n(), inst.m());
    let slack = T::lit(APPROX_SLACK);
    let ql = inst.utility() == UtilityKind::QuasiLinear;
    let keep = T::one() - epsilon;
    for i in 0..n {
        let spent = (0..m).fold(T::zero(), |acc, j| acc + p[j] * x[i * m + j]);
        if spent > inst.budget(i) * (T::one() + slack) {
            return Err(ApproxViolation::Budget { buyer: i });
        }
    }
    for i in 0..n {
        let row = inst.row(i);
        let r = min_ratio(inst, i, p).map_err(|_| ApproxViolation::Utility { buyer: i })?;
        let budget = keep * inst.budget(i);
        let (got, best) = if ql {
            let got = (0..m).fold(T::zero(), |acc, j| acc + (row[j] - p[j]) * x[i * m + j]);
            (got, budget * (T::one() / r - T::one()).max(T::zero()))
        } else {
            let got = (0..m).fold(T::zero(), |acc, j| acc + row[j] * x[i * m + j]);
            (got, budget / r)
        };
        if got < keep * best - slack * best.abs() {
            return Err(ApproxViolation::Utility { buyer: i });
        }
    }
    for j in 0..m {
        let sold = (0..n).fold(T::zero(), |acc, i| acc + x[i * m + j]);
        if sold > T::one() + slack || sold < keep - slack {
            return Err(ApproxViolation::Clearing { item: j });
        }
    }
    Ok(())
}

/// Allocation built from an equilibrium for nearby prices: item `j` keeps its
/// equilibrium allocation when `p_j <= p*_j` and is scaled by `1 - eps` otherwise.
pub fn nearby_allocation<T: Scalar>(p: &[T], p_star: &[T], x_star: &[T], epsilon: T) -> Vec<T> {
    let m = p.len();
    x_star
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let j = k % m;
            if p[j] <= p_star[j] {
                x
            } else {
                (T::one() - epsilon) * x
            }
        })
        .collect()
}
