//! The dual Eisenberg-Gale objective in price space and the closed-form
//! constants that govern tatonnement on it.
//!
//! For a linear market the dual objective is
//! `phi(p) = sum_j p_j - sum_i B_i log(min_k p_k / v_ik)`; the quasi-linear
//! version clamps the inner minimum at one. Tatonnement is subgradient
//! descent on these functions, and the excess supply `1 - sum_i x_i` is a
//! subgradient.
//!
//! Items a buyer does not value are skipped in every `min_k p_k / v_ik`
//! (their ratio is infinite).

use std::fmt::Write as _;

use thiserror::Error;

use crate::demand::{excess_demand, min_ratio, DemandError, TieBreakPolicy};
use crate::market::{MarketInstance, UtilityKind};
use crate::scalar::{max_of, min_of, Scalar};

/// Additive slack applied by [`bound_monitor`].
pub const MONITOR_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error("buyer {buyer} has nonpositive best price-per-value ratio")]
    NonpositiveRatio { buyer: usize },
    #[error("stepsize {eta} is not below the cap {cap}")]
    StepsizeTooLarge { eta: f64, cap: f64 },
    #[error("price of item {item} must be positive, got {price}")]
    NonpositivePrice { item: usize, price: f64 },
    #[error(transparent)]
    Demand(#[from] DemandError),
}

impl DualError {
    /// False for a rejected stepsize, which is a caller error rather than a numerical one.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, DualError::StepsizeTooLarge { .. })
    }
}

fn log_min_ratio<T: Scalar>(inst: &MarketInstance<T>, i: usize, p: &[T], clamp_at_one: bool) -> Result<T, DualError> {
    let r = min_ratio(inst, i, p).map_err(|_| DualError::NonpositiveRatio { buyer: i })?;
    if !(r > T::zero()) {
        return Err(DualError::NonpositiveRatio { buyer: i });
    }
    Ok(if clamp_at_one { r.min(T::one()).ln() } else { r.ln() })
}

fn objective<T: Scalar>(inst: &MarketInstance<T>, p: &[T], ql: bool) -> Result<T, DualError> {
    let mut value: T = p.iter().copied().sum();
    for i in 0..inst.n() {
        value = value - inst.budget(i) * log_min_ratio(inst, i, p, ql)?;
    }
    Ok(value)
}

/// Linear dual objective `sum_j p_j - sum_i B_i log(min_k p_k / v_ik)`.
pub fn phi<T: Scalar>(inst: &MarketInstance<T>, p: &[T]) -> Result<T, DualError> {
    objective(inst, p, false)
}

/// Quasi-linear dual objective, with the inner minimum clamped at one.
pub fn phi_ql<T: Scalar>(inst: &MarketInstance<T>, p: &[T]) -> Result<T, DualError> {
    objective(inst, p, true)
}

/// [`phi`] or [`phi_ql`] according to the instance's utility kind.
pub fn dual_objective<T: Scalar>(inst: &MarketInstance<T>, p: &[T]) -> Result<T, DualError> {
    objective(inst, p, inst.utility() == UtilityKind::QuasiLinear)
}

/// Excess supply `1 - sum_i x_i` for the demand realized under `policy`.
pub fn subgradient<T: Scalar>(inst: &MarketInstance<T>, p: &[T], policy: &TieBreakPolicy) -> Result<Vec<T>, DualError> {
    let profile = excess_demand(inst, p, policy)?;
    Ok(profile.z.into_iter().map(|z| -z).collect())
}

/// `max_i v_ij / ||v_i||_inf` for every item.
fn relative_item_weight<T: Scalar>(inst: &MarketInstance<T>) -> Vec<T> {
    let row_max: Vec<T> = (0..inst.n()).map(|i| max_of(inst.row(i))).collect();
    (0..inst.m()).map(|j| (0..inst.n()).map(|i| inst.value(i, j) / row_max[i]).fold(T::zero(), T::max)).collect()
}

/// Linear price floor: `(B_min / 4m) * max_i v_ij / ||v_i||_inf`.
pub fn floor_linear<T: Scalar>(inst: &MarketInstance<T>) -> Vec<T> {
    let kappa = inst.min_budget() / (T::lit(4.0) * T::from_usize_lossy(inst.m()));
    relative_item_weight(inst).into_iter().map(|w| kappa * w).collect()
}

/// Quasi-linear price floor: `min{B_min / 4m, v_min / 2} * max_i v_ij / ||v_i||_inf`,
/// where `v_min = min_j v_{b(j) j}` and `b(j)` is the lowest-indexed buyer
/// maximizing `v_ij / ||v_i||_inf`.
pub fn floor_ql<T: Scalar>(inst: &MarketInstance<T>) -> Vec<T> {
    let row_max: Vec<T> = (0..inst.n()).map(|i| max_of(inst.row(i))).collect();
    let mut v_min = T::infinity();
    for j in 0..inst.m() {
        let mut best = T::neg_infinity();
        let mut owner = 0;
        for (i, &rm) in row_max.iter().enumerate() {
            let w = inst.value(i, j) / rm;
            if w > best {
                best = w;
                owner = i;
            }
        }
        v_min = v_min.min(inst.value(owner, j));
    }
    let kappa = inst.min_budget() / (T::lit(4.0) * T::from_usize_lossy(inst.m()));
    let factor = kappa.min(v_min / T::lit(2.0));
    relative_item_weight(inst).into_iter().map(|w| factor * w).collect()
}

/// [`floor_linear`] or [`floor_ql`] according to the utility kind.
pub fn price_floor<T: Scalar>(inst: &MarketInstance<T>) -> Vec<T> {
    match inst.utility() {
        UtilityKind::Linear => floor_linear(inst),
        UtilityKind::QuasiLinear => floor_ql(inst),
    }
}

/// Largest stepsize for which the price-floor guarantees hold (exclusive).
pub fn stepsize_cap<T: Scalar>(floor: &[T]) -> T {
    min_of(floor) / (T::lit(2.0) * T::from_usize_lossy(floor.len()))
}

/// Trajectory bounds that hold for every constant-stepsize additive run
/// started at or above the floor with a stepsize below the cap.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceBounds<T> {
    pub eta: T,
    pub floor: Vec<T>,
    pub stepsize_cap: T,
    /// `floor_j - 2 m eta`.
    pub price_lower: Vec<T>,
    pub price_upper: Vec<T>,
    /// Bound on the Euclidean norm of the excess demand.
    pub grad_bound: T,
}

pub fn price_bounds<T: Scalar>(inst: &MarketInstance<T>, eta: T) -> Result<PriceBounds<T>, DualError> {
    let floor = price_floor(inst);
    let cap = stepsize_cap(&floor);
    if !(eta < cap) || !(eta > T::zero()) {
        return Err(DualError::StepsizeTooLarge { eta: eta.as_f64(), cap: cap.as_f64() });
    }
    let m = T::from_usize_lossy(inst.m());
    let shift = T::lit(2.0) * m * eta;
    let total = inst.total_budget();
    let price_lower: Vec<T> = floor.iter().map(|&f| f - shift).collect();
    let grad_bound = total / (min_of(&floor) - shift) + m;
    let price_upper = match inst.utility() {
        UtilityKind::Linear => floor.iter().map(|&f| (T::one() + eta / (f - shift)) * total).collect(),
        UtilityKind::QuasiLinear => (0..inst.m())
            .map(|j| {
                let top = (0..inst.n()).map(|i| inst.value(i, j)).fold(T::zero(), T::max);
                top.min(total) + eta * total / (floor[j] - shift)
            })
            .collect(),
    };
    Ok(PriceBounds { eta, floor, stepsize_cap: cap, price_lower, price_upper, grad_bound })
}

/// Quadratic-growth modulus `min_j p*_j / (2 pbar_j^2)`.
pub fn qg_modulus<T: Scalar>(price_upper: &[T], p_star: &[T]) -> T {
    p_star.iter().zip(price_upper).map(|(&ps, &ub)| ps / (T::lit(2.0) * ub * ub)).fold(T::infinity(), T::min)
}

/// Every closed-form constant for one instance and stepsize.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryReport<T> {
    pub bounds: PriceBounds<T>,
    pub qg_modulus: T,
    /// `eta G^2 / (2 alpha)`.
    pub error_radius: T,
    pub recommended_eta: Option<T>,
}

pub fn theory_report<T: Scalar>(inst: &MarketInstance<T>, eta: T, p_star: &[T]) -> Result<TheoryReport<T>, DualError> {
    if let Some(item) = p_star.iter().position(|&x| !(x > T::zero())) {
        return Err(DualError::NonpositivePrice { item, price: p_star[item].as_f64() });
    }
    let bounds = price_bounds(inst, eta)?;
    let alpha = qg_modulus(&bounds.price_upper, p_star);
    let g = bounds.grad_bound;
    let error_radius = eta * g * g / (T::lit(2.0) * alpha);
    Ok(TheoryReport { bounds, qg_modulus: alpha, error_radius, recommended_eta: None })
}

impl<T: Scalar> TheoryReport<T> {
    /// `(1 - 2 eta alpha)^t * err0 + e`.
    pub fn envelope(&self, t: u64, err0: T) -> T {
        let rate = T::one() - T::lit(2.0) * self.bounds.eta * self.qg_modulus;
        rate.powf(T::lit(t as f64)) * err0 + self.error_radius
    }

    /// Flat `key=value` block, one entry per line.
    pub fn to_key_value(&self) -> String {
        let b = &self.bounds;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        line("eta", fmt_real(b.eta));
        line("stepsize_cap", fmt_real(b.stepsize_cap));
        line("grad_bound", fmt_real(b.grad_bound));
        line("alpha", fmt_real(self.qg_modulus));
        line("e", fmt_real(self.error_radius));
        if let Some(r) = self.recommended_eta {
            line("recommended_eta", fmt_real(r));
        }
        line("floor", fmt_reals(&b.floor));
        line("price_lower", fmt_reals(&b.price_lower));
        line("price_upper", fmt_reals(&b.price_upper));
        out
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_real<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

pub fn fmt_reals<T: Scalar>(xs: &[T]) -> String {
    xs.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(" ")
}

/// Constant stepsize guaranteeing `||p - p*||^2 <= epsilon`:
/// `min{ min_j f_j / 4m, 2 eps min_j p*_j / (9 B^2 (2B / min_j f_j + m)^2) }`
/// with `f` the utility-appropriate floor. `p_star_lower` may be the exact
/// equilibrium or any positive lower bound on it.
pub fn recommend_stepsize<T: Scalar>(inst: &MarketInstance<T>, epsilon: T, p_star_lower: &[T]) -> T {
    let floor = price_floor(inst);
    let f_min = min_of(&floor);
    let m = T::from_usize_lossy(inst.m());
    let total = inst.total_budget();
    let first = f_min / (T::lit(4.0) * m);
    let g = T::lit(2.0) * total / f_min + m;
    let second = T::lit(2.0) * epsilon * min_of(p_star_lower) / (T::lit(9.0) * total * total * g * g);
    first.min(second)
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundViolation {
    BelowFloor { item: usize },
    AboveUpper { item: usize },
    ExcessDemandNorm,
}

/// Checks the lower price bound, the excess-demand norm bound, and the upper
/// price bound at one state, each with additive slack [`MONITOR_SLACK`].
pub fn bound_monitor<T: Scalar>(bounds: &PriceBounds<T>, p: &[T], z: &[T]) -> Vec<BoundViolation> {
    let slack = T::lit(MONITOR_SLACK);
    let mut out = Vec::new();
    for (item, &pj) in p.iter().enumerate() {
        if pj < bounds.price_lower[item] - slack {
            out.push(BoundViolation::BelowFloor { item });
        }
    }
    let norm = z.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > bounds.grad_bound + slack {
        out.push(BoundViolation::ExcessDemandNorm);
    }
    for (item, &pj) in p.iter().enumerate() {
        if pj > bounds.price_upper[item] + slack {
            out.push(BoundViolation::AboveUpper { item });
        }
    }
    out
}

fn check_positive<T: Scalar>(p: &[T]) -> Result<(), DualError> {
    match p.iter().position(|&x| !(x > T::zero())) {
        Some(item) => Err(DualError::NonpositivePrice { item, price: p[item].as_f64() }),
        None => Ok(()),
    }
}

/// Strictly convex minorant of the dual objective that touches it at `p_star`:
/// `h(p) = sum_j p_j - sum_{i,j: x*_ij > 0} p*_j x*_ij log(p_j / v_ij)`.
/// `x_star` is row-major `n x m`.
pub fn aux_h<T: Scalar>(inst: &MarketInstance<T>, p: &[T], p_star: &[T], x_star: &[T]) -> Result<T, DualError> {
    check_positive(p)?;
    let m = inst.m();
    let mut value: T = p.iter().copied().sum();
    for i in 0..inst.n() {
        for j in 0..m {
            let x = x_star[i * m + j];
            if x > T::zero() {
                value = value - p_star[j] * x * (p[j] / inst.value(i, j)).ln();
            }
        }
    }
    Ok(value)
}

/// Gradient of [`aux_h`]: `1 - p*_j sum_i x*_ij / p_j`, which is `1 - p*_j / p_j`
/// when `x_star` clears the market.
pub fn aux_h_grad<T: Scalar>(
    inst: &MarketInstance<T>,
    p: &[T],
    p_star: &[T],
    x_star: &[T],
) -> Result<Vec<T>, DualError> {
    check_positive(p)?;
    let m = inst.m();
    Ok((0..m)
        .map(|j| {
            let sold = (0..inst.n()).fold(T::zero(), |acc, i| acc + x_star[i * m + j]);
            T::one() - p_star[j] * sold / p[j]
        })
        .collect())
}
