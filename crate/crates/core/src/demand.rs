//! Maximum bang-per-buck (MBB) sets and realized demand.
//!
//! Linear buyers spend their whole budget on MBB items. Quasi-linear buyers
//! do the same only while the best price-per-value ratio is below one; above
//! one they keep their money, and exactly at one the [`QlIndifference`] rule
//! decides. Which MBB items receive the money is fixed by [`TieBreak`].

use thiserror::Error;

use crate::market::{Bundle, MarketInstance, UtilityKind};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("unbounded demand: buyer {buyer} values item {item} but its price is {price}")]
    UnboundedDemand { buyer: usize, item: usize, price: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum TieBreak {
    /// Whole budget on the lowest-indexed MBB item.
    #[default]
    SmallestIndex,
    /// Equal spend on every MBB item.
    UniformSplit,
    /// Spend proportional to valuation across MBB items.
    ProportionalToValue,
}

/// Quasi-linear behaviour when the best ratio `min_k p_k / v_ik` is exactly one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum QlIndifference {
    #[default]
    SpendAll,
    SpendNothing,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TieBreakPolicy {
    pub rule: TieBreak,
    pub ql_indifference: QlIndifference,
    /// Relative slack for MBB membership; zero means exact comparison.
    pub rel_tol: f64,
}

impl TieBreakPolicy {
    pub fn new(rule: TieBreak) -> Self {
        Self { rule, ..Self::default() }
    }
}

/// One demand realization for the whole market.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandProfile<T> {
    pub bundles: Vec<Bundle<T>>,
    /// Excess demand `z_j = sum_i x_ij - 1`.
    pub z: Vec<T>,
}

/// `min_k p_k / v_ik` over the items buyer `i` values, with the first index attaining it.
fn best_ratio<T: Scalar>(inst: &MarketInstance<T>, i: usize, p: &[T]) -> Result<(T, usize), DemandError> {
    let row = inst.row(i);
    let mut best = T::infinity();
    let mut arg = usize::MAX;
    for &k in inst.support(i) {
        let price = p[k];
        if !(price > T::zero()) {
            return Err(DemandError::UnboundedDemand { buyer: i, item: k, price: price.as_f64() });
        }
        let r = price / row[k];
        if r < best {
            best = r;
            arg = k;
        }
    }
    Ok((best, arg))
}

/// Smallest price-per-value ratio of buyer `i`; the inverse of the best bang-per-buck.
pub fn min_ratio<T: Scalar>(inst: &MarketInstance<T>, i: usize, p: &[T]) -> Result<T, DemandError> {
    best_ratio(inst, i, p).map(|(r, _)| r)
}

pub fn mbb_set<T: Scalar>(
    inst: &MarketInstance<T>,
    i: usize,
    p: &[T],
    rel_tol: f64,
) -> Result<Vec<usize>, DemandError> {
    let (r, _) = best_ratio(inst, i, p)?;
    let cutoff = mbb_cutoff(r, rel_tol);
    let row = inst.row(i);
    Ok(inst.support(i).iter().copied().filter(|&k| p[k] / row[k] <= cutoff).collect())
}

#[inline]
fn mbb_cutoff<T: Scalar>(r: T, rel_tol: f64) -> T {
    if rel_tol == 0.0 {
        r
    } else {
        r * (T::one() + T::lit(rel_tol))
    }
}

/// Core demand rule shared by the public API and the dynamics hot loop.
/// Calls `emit(item, spend)` for every item receiving money and returns the leftover.
#[inline]
pub(crate) fn allocate_spend<T: Scalar>(
    inst: &MarketInstance<T>,
    i: usize,
    p: &[T],
    policy: &TieBreakPolicy,
    quasi_linear: bool,
    mut emit: impl FnMut(usize, T),
) -> Result<T, DemandError> {
    let budget = inst.budget(i);
    let support = inst.support(i);
    let row = inst.row(i);

    if let [only] = *support {
        let price = p[only];
        if !(price > T::zero()) {
            return Err(DemandError::UnboundedDemand { buyer: i, item: only, price: price.as_f64() });
        }
        if quasi_linear && !ql_spends(price / row[only], policy) {
            return Ok(budget);
        }
        emit(only, budget);
        return Ok(T::zero());
    }

    let (r, first) = best_ratio(inst, i, p)?;
    if quasi_linear && !ql_spends(r, policy) {
        return Ok(budget);
    }
    let cutoff = mbb_cutoff(r, policy.rel_tol);
    let in_mbb = |k: usize| p[k] / row[k] <= cutoff;

    match policy.rule {
        TieBreak::SmallestIndex => {
            let k = if policy.rel_tol == 0.0 {
                first
            } else {
                support.iter().copied().find(|&k| in_mbb(k)).unwrap_or(first)
            };
            emit(k, budget);
        }
        TieBreak::UniformSplit => {
            let count = support.iter().filter(|&&k| in_mbb(k)).count();
            let share = budget / T::from_usize_lossy(count);
            for &k in support.iter().filter(|&&k| in_mbb(k)) {
                emit(k, share);
            }
        }
        TieBreak::ProportionalToValue => {
            let vsum: T = support.iter().filter(|&&k| in_mbb(k)).map(|&k| row[k]).sum();
            for &k in support.iter().filter(|&&k| in_mbb(k)) {
                emit(k, budget * row[k] / vsum);
            }
        }
    }
    Ok(T::zero())
}

#[inline]
pub(crate) fn ql_spends<T: Scalar>(r: T, policy: &TieBreakPolicy) -> bool {
    if r < T::one() {
        true
    } else if r > T::one() {
        false
    } else {
        policy.ql_indifference == QlIndifference::SpendAll
    }
}

fn bundle<T: Scalar>(
    inst: &MarketInstance<T>,
    i: usize,
    p: &[T],
    policy: &TieBreakPolicy,
    quasi_linear: bool,
) -> Result<Bundle<T>, DemandError> {
    let m = inst.m();
    let mut x = vec![T::zero(); m];
    let mut spend = vec![T::zero(); m];
    let leftover = allocate_spend(inst, i, p, policy, quasi_linear, |k, s| {
        spend[k] = spend[k] + s;
        x[k] = x[k] + s / p[k];
    })?;
    Ok(Bundle { x, spend, leftover })
}

/// A member of the linear demand set: the whole budget on MBB items.
pub fn linear_demand<T: Scalar>(
    inst: &MarketInstance<T>,
    i: usize,
    p: &[T],
    policy: &TieBreakPolicy,
) -> Result<Bundle<T>, DemandError> {
    bundle(inst, i, p, policy, false)
}

/// A member of the quasi-linear demand set.
pub fn ql_demand<T: Scalar>(
    inst: &MarketInstance<T>,
    i: usize,
    p: &[T],
    policy: &TieBreakPolicy,
) -> Result<Bundle<T>, DemandError> {
    bundle(inst, i, p, policy, true)
}

pub fn buyer_demand<T: Scalar>(
    inst: &MarketInstance<T>,
    i: usize,
    p: &[T],
    policy: &TieBreakPolicy,
) -> Result<Bundle<T>, DemandError> {
    bundle(inst, i, p, policy, inst.utility() == UtilityKind::QuasiLinear)
}

pub fn excess_demand<T: Scalar>(
    inst: &MarketInstance<T>,
    p: &[T],
    policy: &TieBreakPolicy,
) -> Result<DemandProfile<T>, DemandError> {
    let bundles = (0..inst.n()).map(|i| buyer_demand(inst, i, p, policy)).collect::<Result<Vec<_>, _>>()?;
    let z = (0..inst.m()).map(|j| bundles.iter().fold(T::zero(), |acc, b| acc + b.x[j]) - T::one()).collect();
    Ok(DemandProfile { bundles, z })
}
