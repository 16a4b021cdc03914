//! Random instances from five valuation distributions.
//!
//! Stream order for a given seed: all `n` budgets first, then valuations
//! row-major. A row that comes out all zero is redrawn in place.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1, LogNormal, StandardNormal};

use super::IoError;
use crate::market::{normalize_instance, MarketInstance, UtilityKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Distribution {
    Uniform01,
    LogNormalStd,
    ExponentialScale1,
    /// `|z|` for `z ~ N(0,1)` restricted to `[1e-3, 10]` by rejection.
    TruncatedNormal,
    UniformIntegers1to100,
}

impl Distribution {
    pub const ALL: [Distribution; 5] = [
        Distribution::Uniform01,
        Distribution::LogNormalStd,
        Distribution::ExponentialScale1,
        Distribution::TruncatedNormal,
        Distribution::UniformIntegers1to100,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Uniform01 => "uniform",
            Distribution::LogNormalStd => "lognormal",
            Distribution::ExponentialScale1 => "exponential",
            Distribution::TruncatedNormal => "truncnormal",
            Distribution::UniformIntegers1to100 => "integers",
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            Distribution::Uniform01 => rng.random::<f64>(),
            Distribution::LogNormalStd => LogNormal::new(0.0, 1.0).expect("unit lognormal").sample(rng),
            Distribution::ExponentialScale1 => Exp1.sample(rng),
            Distribution::TruncatedNormal => loop {
                let z: f64 = StandardNormal.sample(rng);
                let a = z.abs();
                if (1e-3..=10.0).contains(&a) {
                    break a;
                }
            },
            Distribution::UniformIntegers1to100 => f64::from(rng.random_range(1u32..=100)),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distribution {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d = match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "uniform" | "uniform01" => Distribution::Uniform01,
            "lognormal" | "lognormalstd" => Distribution::LogNormalStd,
            "exponential" | "exp" | "exponentialscale1" => Distribution::ExponentialScale1,
            "truncnormal" | "truncatednormal" | "normal" => Distribution::TruncatedNormal,
            "integers" | "int" | "uniformintegers" | "uniformintegers1to100" => Distribution::UniformIntegers1to100,
            _ => {
                return Err(IoError::BadSpec(format!(
                    "unknown distribution `{s}` (expected uniform, lognormal, exponential, truncnormal, integers)"
                )))
            }
        };
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub distribution: Distribution,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub utility: UtilityKind,
    /// Rescale budgets to sum to one. Ignored for quasi-linear markets.
    pub normalize_budgets: bool,
}

impl SyntheticSpec {
    pub fn new(distribution: Distribution, n: usize, m: usize, seed: u64) -> Self {
        Self { distribution, n, m, seed, utility: UtilityKind::Linear, normalize_budgets: true }
    }

    pub fn quasi_linear(mut self) -> Self {
        self.utility = UtilityKind::QuasiLinear;
        self
    }

    pub fn with_normalized_budgets(mut self, on: bool) -> Self {
        self.normalize_budgets = on;
        self
    }
}

/// Uniform on `(0, 1)`: zero is redrawn so every budget is positive.
pub(crate) fn positive_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// The raw draw before any normalization.
pub fn generate_unnormalized(spec: &SyntheticSpec) -> Result<MarketInstance<f64>, IoError> {
    if spec.n == 0 || spec.m == 0 {
        return Err(IoError::BadSpec("n and m must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let budgets: Vec<f64> = (0..spec.n).map(|_| positive_unit(&mut rng)).collect();
    let mut valuations = vec![0.0; spec.n * spec.m];
    for row in valuations.chunks_exact_mut(spec.m) {
        loop {
            row.iter_mut().for_each(|v| *v = spec.distribution.sample(&mut rng));
            if row.iter().any(|&v| v > 0.0) {
                break;
            }
        }
    }
    // A column of zeros would need every buyer to draw zero there; only the
    // uniform draw can even produce a zero, with probability 2^-53 per entry.
    Ok(MarketInstance::from_flat(budgets, spec.m, valuations, spec.utility)?)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MarketInstance<f64>, IoError> {
    let raw = generate_unnormalized(spec)?;
    Ok(normalize_instance(&raw, spec.normalize_budgets)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::validate_instance;

    #[test]
    fn same_seed_same_instance() {
        for d in Distribution::ALL {
            let spec = SyntheticSpec::new(d, 10, 20, 1);
            assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
            let other = SyntheticSpec { seed: 2, ..spec };
            assert_ne!(generate_synthetic(&other).unwrap(), generate_synthetic(&spec).unwrap());
        }
    }

    #[test]
    fn integer_draws_stay_in_range() {
        let raw = generate_unnormalized(&SyntheticSpec::new(Distribution::UniformIntegers1to100, 30, 60, 9)).unwrap();
        assert!(raw.valuations().iter().all(|&v| v.fract() == 0.0 && (1.0..=100.0).contains(&v)));
        assert!(raw.valuations().contains(&1.0) && raw.valuations().contains(&100.0));
    }

    #[test]
    fn truncated_normal_respects_cutoffs() {
        let raw = generate_unnormalized(&SyntheticSpec::new(Distribution::TruncatedNormal, 40, 80, 3)).unwrap();
        assert!(raw.valuations().iter().all(|&v| (1e-3..=10.0).contains(&v)));
    }

    #[test]
    fn rows_and_budgets_normalized() {
        for d in Distribution::ALL {
            let inst = generate_synthetic(&SyntheticSpec::new(d, 10, 20, 5)).unwrap();
            assert!(validate_instance(&inst).is_ok());
            for i in 0..inst.n() {
                assert!((inst.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            assert!((inst.total_budget() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn quasi_linear_budgets_are_raw() {
        let spec = SyntheticSpec::new(Distribution::Uniform01, 10, 20, 5);
        let lin = generate_synthetic(&spec).unwrap();
        let ql = generate_synthetic(&spec.clone().quasi_linear()).unwrap();
        let raw = generate_unnormalized(&spec).unwrap();
        assert_eq!(ql.budgets(), raw.budgets());
        assert_ne!(lin.budgets(), raw.budgets());
        assert_eq!(ql.valuations(), lin.valuations());
    }

    #[test]
    fn names_parse_back() {
        for d in Distribution::ALL {
            assert_eq!(d.as_str().parse::<Distribution>().unwrap(), d);
        }
        assert!("gamma".parse::<Distribution>().is_err());
    }
}
