//! Analytic power calculations for the BH step-up procedure.
//!
//! The central object is the limiting positive-call fraction `γ`, the
//! largest root of `G(u f) = u`. Everything else — average power, oracle
//! power, CLT variances, λ-power, FDF quantiles, reduced FDRs and sample
//! sizes — is a closed-form function of `γ` and the mixture model.

mod clt;
mod lower;
mod partials;
mod power;
mod reduced;
mod samplesize;

pub use clt::{clt_variances, fdf_quantile, lambda_eq, lambda_power, CltVariances};
pub use lower::{avg_power_lower_bound, LowerBound, LOWER_BOUND_SPREAD};
pub use partials::{power_partials, ParamRange, PartialRanges, Partials};
pub use power::{avg_power_ist, oracle_power, solve_gamma};
pub use reduced::{
    min_feasible_m, reduced_fdr_closed, reduced_fdr_numeric, reduced_fdr_design, AlphaMode, FdrDesign,
};
pub use samplesize::{sample_size_avg, sample_size_lambda, DEFAULT_N_MAX};

use serde::{Deserialize, Serialize};

use crate::dists::{Family, TestDist};
use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::scalar::{c, Real};

/// One design configuration: `m` simultaneous two-group comparisons with
/// `n` subjects per group, a proportion `r` of non-null tests with
/// standardised effect size `θ`, analysed by BH at nominal FDR `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct DesignPoint<T: Real> {
    pub m: u64,
    pub r: T,
    pub f: T,
    pub theta: T,
    pub n: u32,
    pub family: Family,
}

impl<T: Real> DesignPoint<T> {
    /// Folded-t design (the default family).
    pub fn new(m: u64, r: T, f: T, theta: T, n: u32) -> Self {
        Self { m, r, f, theta, n, family: Family::FoldedT }
    }

    /// Design specified by the expected number of non-null tests `E[M] = m r`.
    pub fn from_expected(m: u64, expected_m: T, f: T, theta: T, n: u32) -> Self {
        Self::new(m, expected_m / c(m as f64), f, theta, n)
    }

    /// Checks every invariant and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.m < 1 {
            problems.push("m must be at least 1".to_string());
        }
        if !(self.r > T::zero() && self.r < T::one()) {
            problems.push(format!("r must lie in (0, 1), got {}", self.r));
        }
        if !(self.f > T::zero() && self.f < T::one()) {
            problems.push(format!("FDR f must lie in (0, 1), got {}", self.f));
        }
        if !(self.theta > T::zero()) || !self.theta.is_finite() {
            problems.push(format!("effect size theta must be positive, got {}", self.theta));
        }
        if self.n < 2 {
            problems.push(format!("per-group sample size n must be at least 2, got {}", self.n));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain { op: "DesignPoint", msg: problems.join("; ") })
        }
    }

    /// Degrees of freedom `2n − 2` of the two-sample t statistic.
    pub fn df(&self) -> T {
        c(2.0 * self.n as f64 - 2.0)
    }

    /// Noncentrality `√(n/2) θ`.
    pub fn ncp(&self) -> T {
        (c::<T>(self.n as f64) / c(2.0)).sqrt() * self.theta
    }

    /// Expected number of non-null tests `m r`.
    pub fn expected_m(&self) -> T {
        c::<T>(self.m as f64) * self.r
    }

    /// `f₀ = (1 − r) f`, the FDR actually delivered by BH.
    pub fn f0(&self) -> T {
        (T::one() - self.r) * self.f
    }

    pub fn with_n(&self, n: u32) -> Self {
        Self { n, ..*self }
    }

    pub fn with_f(&self, f: T) -> Self {
        Self { f, ..*self }
    }

    /// The p-value mixture implied by the design.
    pub fn model(&self) -> Result<MixtureModel<T>> {
        self.validate()?;
        let df = self.df();
        let null = TestDist::new(self.family, df, T::zero())?;
        let alt = TestDist::new(self.family, df, self.ncp())?;
        MixtureModel::new(self.r, null, alt)
    }
}

/// Options controlling which parts of a [`PowerReport`] are computed.
#[derive(Debug, Clone)]
pub struct ReportOptions<T: Real> {
    /// λ thresholds at which λ-power is reported.
    pub lambdas: Vec<T>,
    /// Compute the finite-m lower bound.
    pub lower_bound: bool,
    /// Treatment of α when solving for the reduced FDR `f′`.
    pub alpha_mode: AlphaMode,
}

impl<T: Real> Default for ReportOptions<T> {
    fn default() -> Self {
        Self { lambdas: vec![c(0.75), c(0.9)], lower_bound: true, alpha_mode: AlphaMode::default() }
    }
}

/// Every analytic output for one design point. Variance-based fields are
/// `None` for degenerate designs (`γ = 0`) and when a bound is infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct PowerReport<T: Real> {
    pub gamma: T,
    pub pi_pi: T,
    pub pi_oracle: Option<T>,
    pub pi_lower: Option<T>,
    /// Binomial mass excluded by the lower-bound truncation (error bound).
    pub pi_lower_truncation: Option<T>,
    pub f0: T,
    pub tau2: Option<T>,
    pub sigma2: Option<T>,
    pub alpha2: Option<T>,
    /// `(λ, λ-power)` pairs.
    pub lambda_powers: Vec<(T, T)>,
    pub lambda_eq: Option<T>,
    pub f_reduced_closed: Option<T>,
    pub f_reduced_numeric: Option<T>,
    pub degenerate: bool,
    /// Per-field diagnostics (infeasible bounds, warnings).
    pub notes: Vec<String>,
}

/// Computes the full analytic report for `dp`.
///
/// Degenerate designs yield zero powers and absent variances rather than an
/// error; only invalid designs are rejected.
pub fn power_report<T: Real>(dp: &DesignPoint<T>, opts: &ReportOptions<T>) -> Result<PowerReport<T>> {
    let mm = dp.model()?;
    let f0 = dp.f0();
    let gamma = solve_gamma(&mm, dp.f);
    let degenerate = gamma <= T::zero();
    let mut notes = Vec::new();
    if let Some(w) = mm.warning() {
        notes.push(w.to_string());
    }
    let pi_pi = if degenerate { T::zero() } else { mm.h(gamma * dp.f) };
    let pi_oracle = match oracle_power(&mm, dp.f) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("oracle power: {e}"));
            None
        }
    };
    let (pi_lower, pi_lower_truncation) = if opts.lower_bound {
        let lb = avg_power_lower_bound(dp)?;
        (Some(lb.value), Some(lb.truncated_mass))
    } else {
        (None, None)
    };
    let mut report = PowerReport {
        gamma,
        pi_pi,
        pi_oracle,
        pi_lower,
        pi_lower_truncation,
        f0,
        tau2: None,
        sigma2: None,
        alpha2: None,
        lambda_powers: opts.lambdas.iter().map(|&l| (l, T::zero())).collect(),
        lambda_eq: None,
        f_reduced_closed: None,
        f_reduced_numeric: None,
        degenerate,
        notes,
    };
    if degenerate {
        report.notes.push("no asymptotic discoveries: limiting positive call fraction is 0".into());
        return Ok(report);
    }
    let v = clt_variances(&mm, dp.f)?;
    report.tau2 = Some(v.tau2);
    report.sigma2 = Some(v.sigma2);
    report.alpha2 = Some(v.alpha2);
    report.lambda_powers = opts.lambdas.iter().map(|&l| (l, v.lambda_power(dp.m, l))).collect();
    report.lambda_eq = Some(v.lambda_eq(dp.m));
    match reduced_fdr_closed(&mm, dp.f, dp.m) {
        Ok(x) => report.f_reduced_closed = Some(x),
        Err(e) => report.notes.push(format!("f'' : {e}")),
    }
    match reduced_fdr_numeric(&mm, dp.f, dp.m, opts.alpha_mode) {
        Ok(x) => report.f_reduced_numeric = Some(x),
        Err(e) => report.notes.push(format!("f' : {e}")),
    }
    Ok(report)
}
