//! Power, sample-size and false-discovery-fraction calculations for the
//! Benjamini–Hochberg step-up procedure applied to many simultaneous
//! two-sided tests.
//!
//! Layers, bottom to top:
//!
//! - [`specfun`]: log-gamma, incomplete beta and its inverse, normal CDF/quantile.
//! - [`dists`]: folded (non)central t and folded normal test-statistic laws.
//! - [`mixture`]: the p-value mixture CDF `G` and its derivative.
//! - [`analytic`]: limiting positive-call fraction, average/oracle power,
//!   finite-m lower bound, CLT variances, λ-power, reduced FDR, sample sizes.
//! - [`montecarlo`]: BH step-up simulation with deterministic parallel replicates.
//! - [`grid`]: parameter sweeps, CSV/JSON-lines persistence and reference comparison.
//!
//! The analytic layers are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the simulation and
//! grid layers use.

pub mod analytic;
pub mod dists;
pub mod error;
pub mod grid;
pub mod mixture;
pub mod montecarlo;
pub mod scalar;
pub mod specfun;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` test-statistic law.
pub type TestDist = dists::TestDist<f64>;
/// `f64` mixture model.
pub type MixtureModel = mixture::MixtureModel<f64>;
/// `f64` design point.
pub type DesignPoint = analytic::DesignPoint<f64>;
/// `f64` analytic report.
pub type PowerReport = analytic::PowerReport<f64>;

/// `f32` test-statistic law.
pub type TestDist32 = dists::TestDist<f32>;
/// `f32` mixture model.
pub type MixtureModel32 = mixture::MixtureModel<f32>;
/// `f32` design point.
pub type DesignPoint32 = analytic::DesignPoint<f32>;

pub use dists::Family;
