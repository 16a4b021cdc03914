//! Market data model: budgets, a dense valuation matrix, and the utility kind.
//!
//! A [`MarketInstance`] is immutable once built. Structural problems (ragged
//! rows, empty markets) are rejected at construction; economic assumptions
//! (positive budgets, no all-zero rows or columns) are reported by
//! [`validate_instance`] so callers can list every violation at once.

use std::fmt;
use std::ops::Deref;

use thiserror::Error;

use crate::scalar::Scalar;

/// Absolute tolerance under which a row (or budget total) already counts as normalized.
pub const NORMALIZED_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum UtilityKind {
    #[default]
    Linear,
    QuasiLinear,
}

impl UtilityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UtilityKind::Linear => "linear",
            UtilityKind::QuasiLinear => "quasilinear",
        }
    }
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for UtilityKind {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(UtilityKind::Linear),
            "quasilinear" | "quasi-linear" | "quasi_linear" | "ql" => Ok(UtilityKind::QuasiLinear),
            other => Err(MarketError::UnknownUtility(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("market needs at least one buyer and one item")]
    Empty,
    #[error("valuation row {row} has {got} entries, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("expected {expected} valuations, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("cannot normalize buyer {0}: valuation row sums to zero")]
    ZeroRow(usize),
    #[error("unknown utility kind `{0}`")]
    UnknownUtility(String),
    #[error("price vector has a negative or non-finite entry at item {0}")]
    InvalidPrice(usize),
}

/// Budgets plus an `n x m` valuation matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketInstance<T> {
    budgets: Vec<T>,
    valuations: Vec<T>,
    m: usize,
    utility: UtilityKind,
    // Items with positive valuation, per buyer. Derived from `valuations`.
    support: Vec<Vec<usize>>,
}

impl<T: Scalar> MarketInstance<T> {
    pub fn new(budgets: Vec<T>, valuations: Vec<Vec<T>>, utility: UtilityKind) -> Result<Self, MarketError> {
        let m = valuations.first().map_or(0, Vec::len);
        for (row, v) in valuations.iter().enumerate() {
            if v.len() != m {
                return Err(MarketError::RaggedRow { row, got: v.len(), expected: m });
            }
        }
        if valuations.len() != budgets.len() {
            return Err(MarketError::WrongLength { expected: budgets.len(), got: valuations.len() });
        }
        Self::from_flat(budgets, m, valuations.into_iter().flatten().collect(), utility)
    }

    /// Builds from a row-major valuation buffer of length `budgets.len() * m`.
    pub fn from_flat(budgets: Vec<T>, m: usize, valuations: Vec<T>, utility: UtilityKind) -> Result<Self, MarketError> {
        let n = budgets.len();
        if n == 0 || m == 0 {
            return Err(MarketError::Empty);
        }
        if valuations.len() != n * m {
            return Err(MarketError::WrongLength { expected: n * m, got: valuations.len() });
        }
        let support = valuations.chunks_exact(m).map(|row| (0..m).filter(|&j| row[j] > T::zero()).collect()).collect();
        Ok(Self { budgets, valuations, m, utility, support })
    }

    pub fn n(&self) -> usize {
        self.budgets.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn utility(&self) -> UtilityKind {
        self.utility
    }

    pub fn budgets(&self) -> &[T] {
        &self.budgets
    }

    pub fn budget(&self, i: usize) -> T {
        self.budgets[i]
    }

    /// Row-major `n x m` valuations.
    pub fn valuations(&self) -> &[T] {
        &self.valuations
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.valuations[i * self.m..(i + 1) * self.m]
    }

    pub fn value(&self, i: usize, j: usize) -> T {
        self.valuations[i * self.m + j]
    }

    /// Items buyer `i` values positively, in increasing index order.
    pub fn support(&self, i: usize) -> &[usize] {
        &self.support[i]
    }

    /// Total budget `B`.
    pub fn total_budget(&self) -> T {
        self.budgets.iter().copied().sum()
    }

    pub fn min_budget(&self) -> T {
        self.budgets.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn with_utility(&self, utility: UtilityKind) -> Self {
        Self { utility, ..self.clone() }
    }

    /// Converts every stored value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MarketInstance<U> {
        let conv = |x: &T| U::lit(x.as_f64());
        MarketInstance::from_flat(
            self.budgets.iter().map(conv).collect(),
            self.m,
            self.valuations.iter().map(conv).collect(),
            self.utility,
        )
        .expect("shape already checked")
    }
}

/// One violated modelling assumption. Indices are zero-based; messages are one-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonpositiveBudget { buyer: usize },
    NegativeValuation { buyer: usize, item: usize },
    NonFinite { buyer: usize, item: Option<usize> },
    ZeroRow { buyer: usize },
    ZeroColumn { item: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NonpositiveBudget { buyer } => {
                write!(f, "nonpositive budget for buyer {}", buyer + 1)
            }
            Violation::NegativeValuation { buyer, item } => {
                write!(f, "negative valuation at buyer {} item {}", buyer + 1, item + 1)
            }
            Violation::NonFinite { buyer, item: None } => {
                write!(f, "non-finite budget for buyer {}", buyer + 1)
            }
            Violation::NonFinite { buyer, item: Some(item) } => {
                write!(f, "non-finite valuation at buyer {} item {}", buyer + 1, item + 1)
            }
            Violation::ZeroRow { buyer } => write!(f, "zero row {}", buyer + 1),
            Violation::ZeroColumn { item } => write!(f, "zero column {}", item + 1),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&msgs.join("; "))
    }
}

pub fn validate_instance<T: Scalar>(inst: &MarketInstance<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let (n, m) = (inst.n(), inst.m());
    for (buyer, &b) in inst.budgets().iter().enumerate() {
        if !b.is_finite() {
            violations.push(Violation::NonFinite { buyer, item: None });
        } else if b <= T::zero() {
            violations.push(Violation::NonpositiveBudget { buyer });
        }
    }
    for buyer in 0..n {
        for (item, &v) in inst.row(buyer).iter().enumerate() {
            if !v.is_finite() {
                violations.push(Violation::NonFinite { buyer, item: Some(item) });
            } else if v < T::zero() {
                violations.push(Violation::NegativeValuation { buyer, item });
            }
        }
    }
    for buyer in 0..n {
        if inst.support(buyer).is_empty() {
            violations.push(Violation::ZeroRow { buyer });
        }
    }
    for item in 0..m {
        if (0..n).all(|i| !(inst.value(i, item) > T::zero())) {
            violations.push(Violation::ZeroColumn { item });
        }
    }
    ValidationReport { violations }
}

/// Rescales each valuation row to sum to one and, for linear markets when
/// `normalize_budgets` is set, the budgets to sum to one.
///
/// Rows (and budget totals) already within [`NORMALIZED_TOL`] of one are left
/// untouched, which makes the operation idempotent on stored values.
pub fn normalize_instance<T: Scalar>(
    inst: &MarketInstance<T>,
    normalize_budgets: bool,
) -> Result<MarketInstance<T>, MarketError> {
    let tol = T::lit(NORMALIZED_TOL);
    let m = inst.m();
    let mut valuations = inst.valuations().to_vec();
    for (i, row) in valuations.chunks_exact_mut(m).enumerate() {
        let sum: T = row.iter().copied().sum();
        if !(sum > T::zero()) {
            return Err(MarketError::ZeroRow(i));
        }
        if (sum - T::one()).abs() > tol {
            row.iter_mut().for_each(|v| *v = *v / sum);
        }
    }
    let mut budgets = inst.budgets().to_vec();
    if normalize_budgets && inst.utility() == UtilityKind::Linear {
        let total: T = budgets.iter().copied().sum();
        if total > T::zero() && (total - T::one()).abs() > tol {
            budgets.iter_mut().for_each(|b| *b = *b / total);
        }
    }
    MarketInstance::from_flat(budgets, m, valuations, inst.utility())
}

/// Nonnegative, finite per-item prices.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceVector<T>(Vec<T>);

impl<T: Scalar> PriceVector<T> {
    pub fn new(p: Vec<T>) -> Result<Self, MarketError> {
        if let Some(j) = p.iter().position(|x| !x.is_finite() || *x < T::zero()) {
            return Err(MarketError::InvalidPrice(j));
        }
        Ok(Self(p))
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for PriceVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// One buyer's purchase under some prices.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle<T> {
    /// Units of each item.
    pub x: Vec<T>,
    /// Money spent on each item, `p_j * x_j`.
    pub spend: Vec<T>,
    /// Unspent budget; always zero for linear buyers.
    pub leftover: T,
}

impl<T: Scalar> Bundle<T> {
    pub fn total_spend(&self) -> T {
        self.spend.iter().copied().sum()
    }

    pub fn utility(&self, values: &[T]) -> T {
        self.x.iter().zip(values).map(|(&x, &v)| x * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(b: Vec<f64>, v: Vec<Vec<f64>>) -> MarketInstance<f64> {
        MarketInstance::new(b, v, UtilityKind::Linear).unwrap()
    }

    #[test]
    fn single_buyer_symmetric_instance_is_valid() {
        let report = validate_instance(&inst(vec![1.0], vec![vec![0.5, 0.5]]));
        assert!(report.is_ok());
        assert_eq!(report.to_string(), "ok");
    }

    #[test]
    fn zero_column_is_reported_one_based() {
        let report = validate_instance(&inst(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![2.0, 0.0]]));
        assert_eq!(report.violations, vec![Violation::ZeroColumn { item: 1 }]);
        assert_eq!(report.to_string(), "zero column 2");
    }

    #[test]
    fn zero_budget_is_reported() {
        let report = validate_instance(&inst(vec![0.0], vec![vec![1.0, 1.0]]));
        assert_eq!(report.violations, vec![Violation::NonpositiveBudget { buyer: 0 }]);
        assert!(report.to_string().contains("nonpositive budget"));
    }

    #[test]
    fn non_finite_and_zero_row_reported_together() {
        let report = validate_instance(&inst(vec![f64::NAN, 1.0], vec![vec![0.0, 0.0], vec![1.0, f64::INFINITY]]));
        assert!(report.violations.contains(&Violation::NonFinite { buyer: 0, item: None }));
        assert!(report.violations.contains(&Violation::NonFinite { buyer: 1, item: Some(1) }));
        assert!(report.violations.contains(&Violation::ZeroRow { buyer: 0 }));
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        assert_eq!(MarketInstance::<f64>::new(vec![], vec![], UtilityKind::Linear), Err(MarketError::Empty));
        assert!(matches!(
            MarketInstance::new(vec![1.0, 1.0], vec![vec![1.0, 2.0], vec![1.0]], UtilityKind::Linear),
            Err(MarketError::RaggedRow { row: 1, .. })
        ));
    }

    #[test]
    fn normalize_symmetric_row() {
        let out = normalize_instance(&inst(vec![1.0], vec![vec![2.0, 2.0]]), false).unwrap();
        assert_eq!(out.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn normalize_single_buyer_with_budget() {
        let out = normalize_instance(&inst(vec![2.0], vec![vec![1.0, 3.0]]), true).unwrap();
        assert_eq!(out.budgets(), &[1.0]);
        assert_eq!(out.row(0), &[0.25, 0.75]);
    }

    #[test]
    fn normalized_instance_is_unchanged() {
        let a = inst(vec![0.25, 0.75], vec![vec![0.5, 0.5], vec![0.1, 0.9]]);
        assert_eq!(normalize_instance(&a, true).unwrap(), a);
    }

    #[test]
    fn ql_budgets_never_normalized() {
        let a = MarketInstance::new(vec![2.0, 3.0], vec![vec![1.0, 1.0], vec![1.0, 3.0]], UtilityKind::QuasiLinear)
            .unwrap();
        let out = normalize_instance(&a, true).unwrap();
        assert_eq!(out.budgets(), &[2.0, 3.0]);
        assert_eq!(out.row(1), &[0.25, 0.75]);
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let a = inst(vec![1.0], vec![vec![0.0, 0.0]]);
        assert_eq!(normalize_instance(&a, false), Err(MarketError::ZeroRow(0)));
    }

    #[test]
    fn support_skips_zero_valuations() {
        let a = inst(vec![1.0], vec![vec![0.0, 0.3, 0.0, 0.7]]);
        assert_eq!(a.support(0), &[1, 3]);
    }

    #[test]
    fn price_vector_rejects_negative() {
        assert!(PriceVector::new(vec![0.0, 1.0]).is_ok());
        assert_eq!(PriceVector::new(vec![1.0, -1e-3]), Err(MarketError::InvalidPrice(1)));
    }

    #[test]
    fn cast_to_f32_preserves_shape() {
        let a = inst(vec![1.0], vec![vec![0.25, 0.75]]);
        let b: MarketInstance<f32> = a.cast();
        assert_eq!(b.row(0), &[0.25f32, 0.75]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (MarketInstance<f64>, bool)> {
            (1usize..5, 1usize..6)
                .prop_flat_map(|(n, m)| {
                    (
                        prop::collection::vec(0.01f64..10.0, n),
                        prop::collection::vec(prop::collection::vec(0.01f64..5.0, m), n),
                        any::<bool>(),
                        any::<bool>(),
                    )
                })
                .prop_map(|(b, v, ql, flag)| {
                    let kind = if ql { UtilityKind::QuasiLinear } else { UtilityKind::Linear };
                    (MarketInstance::new(b, v, kind).unwrap(), flag)
                })
        }

        proptest! {
            #[test]
            fn normalize_is_idempotent((a, flag) in instance()) {
                let once = normalize_instance(&a, flag).unwrap();
                let twice = normalize_instance(&once, flag).unwrap();
                prop_assert_eq!(&once, &twice);
                for i in 0..once.n() {
                    let s: f64 = once.row(i).iter().sum();
                    prop_assert!((s - 1.0).abs() <= NORMALIZED_TOL);
                }
            }

            #[test]
            fn normalize_keeps_valid_instances_valid((a, flag) in instance()) {
                prop_assume!(validate_instance(&a).is_ok());
                prop_assert!(validate_instance(&normalize_instance(&a, flag).unwrap()).is_ok());
            }
        }
    }
}
