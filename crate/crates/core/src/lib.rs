//! Tâtonnement price dynamics for linear and quasi-linear Fisher markets.
//!
//! The crate covers the whole loop around a price-adjustment experiment:
//!
//! - [`market`]: instances, validation, normalization.
//! - [`demand`]: maximum bang-per-buck demand with pluggable tie-breaking.
//! - [`dual`]: the convex dual objective, its subgradients, and the closed-form
//!   bounds (price floor, stepsize cap, error radius) that govern convergence.
//! - [`engine`]: additive, multiplicative, and entropic price updates.
//! - [`oracle`]: proportional-response equilibrium solver, KKT residuals,
//!   brute-force cross-check, and the approximate-equilibrium test.
//! - [`io`]: text instance files, synthetic generators, ratings-CSV ingestion.
//! - [`experiment`]: configured runs, summaries, and plots.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what file formats and experiments use.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand;
pub mod dual;
pub mod engine;
pub mod experiment;
pub mod io;
pub mod market;
pub mod oracle;
pub mod scalar;

pub use scalar::Scalar;

pub type Market = market::MarketInstance<f64>;
pub type Prices = market::PriceVector<f64>;
pub type Bundle = market::Bundle<f64>;
pub type DemandProfile = demand::DemandProfile<f64>;
pub type RunConfig = engine::RunConfig<f64>;
pub type Trajectory = engine::Trajectory<f64>;
pub type TheoryReport = dual::TheoryReport<f64>;
pub type Equilibrium = oracle::EquilibriumResult<f64>;

pub type Market32 = market::MarketInstance<f32>;
pub type RunConfig32 = engine::RunConfig<f32>;
pub type Trajectory32 = engine::Trajectory<f32>;
