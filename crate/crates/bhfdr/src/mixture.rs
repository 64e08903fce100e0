//! The p-value mixture model.
//!
//! With a proportion `r` of non-null tests, two-sided p-values are i.i.d.
//! with CDF `G(u) = (1 − r) u + r H(u)`, where `H(u) = F̄_A(F̄₀⁻¹(u))` is the
//! probability that a non-null statistic exceeds the null critical value
//! at level `u`.

use crate::dists::TestDist;
use crate::error::{Error, Result};
use crate::scalar::{c, Real};

/// One component of a (possibly mixed) alternative law.
#[derive(Debug, Clone, PartialEq)]
pub struct AltComponent<T: Real> {
    pub weight: T,
    pub dist: TestDist<T>,
}

/// Mixture of a null law and a weighted alternative.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel<T: Real> {
    r: T,
    null: TestDist<T>,
    alts: Vec<AltComponent<T>>,
    warning: Option<String>,
}

/// Number of log-spaced points used for the concavity diagnostic.
const CONCAVITY_GRID: usize = 512;

impl<T: Real> MixtureModel<T> {
    /// Single-component alternative.
    pub fn new(r: T, null: TestDist<T>, alt: TestDist<T>) -> Result<Self> {
        Self::with_components(r, null, vec![AltComponent { weight: T::one(), dist: alt }])
    }

    /// Finite-mixture alternative `Σ w_ℓ F_ℓ`. Concavity of `G` is checked
    /// numerically when more than one component is present; a failed check
    /// is recorded in [`MixtureModel::warning`] rather than rejected.
    pub fn with_components(r: T, null: TestDist<T>, alts: Vec<AltComponent<T>>) -> Result<Self> {
        if !(r > T::zero() && r < T::one()) {
            return Err(Error::domain("MixtureModel", format!("r must lie in (0, 1), got {r}")));
        }
        if null.ncp() != T::zero() {
            return Err(Error::domain("MixtureModel", "the null law must be central"));
        }
        if alts.is_empty() {
            return Err(Error::domain("MixtureModel", "at least one alternative component is required"));
        }
        let mut total = T::zero();
        for comp in &alts {
            if !(comp.weight > T::zero() && comp.weight <= T::one()) {
                return Err(Error::domain("MixtureModel", format!("weights must lie in (0, 1], got {}", comp.weight)));
            }
            if !(comp.dist.ncp() > T::zero()) {
                return Err(Error::domain("MixtureModel", "alternative components need ncp > 0"));
            }
            if comp.dist.family() != null.family() || comp.dist.df() != null.df() {
                return Err(Error::domain("MixtureModel", "alternative components must share the null family and df"));
            }
            total = total + comp.weight;
        }
        let tol = c::<T>(1e-12).max(c::<T>(16.0) * T::epsilon());
        if (total - T::one()).abs() > tol {
            return Err(Error::domain("MixtureModel", format!("weights must sum to 1, got {total}")));
        }
        let mut model = Self { r, null, alts, warning: None };
        if model.alts.len() > 1 {
            if let Some(u) = model.concavity_violation() {
                model.warning = Some(format!("G does not appear concave near u = {u}"));
            }
        }
        Ok(model)
    }

    pub fn r(&self) -> T {
        self.r
    }

    pub fn null(&self) -> &TestDist<T> {
        &self.null
    }

    pub fn alternatives(&self) -> &[AltComponent<T>] {
        &self.alts
    }

    /// Diagnostic attached at construction when the concavity check fails.
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Copy of the model with a different non-null proportion.
    pub fn with_r(&self, r: T) -> Result<Self> {
        Self::with_components(r, self.null, self.alts.clone())
    }

    /// Null critical value `F̄₀⁻¹(u)`.
    pub fn critical_value(&self, u: T) -> T {
        self.null.inv_ccdf_raw(u)
    }

    /// `F̄_A(x)`.
    pub fn alt_ccdf(&self, x: T) -> T {
        self.alts.iter().fold(T::zero(), |acc, a| acc + a.weight * a.dist.ccdf_raw(x))
    }

    /// `f_A(x)`.
    pub fn alt_pdf(&self, x: T) -> T {
        self.alts.iter().fold(T::zero(), |acc, a| acc + a.weight * a.dist.pdf_raw(x))
    }

    /// `H(u) = F̄_A(F̄₀⁻¹(u))`: power of a single level-`u` test.
    pub fn h(&self, u: T) -> T {
        if u <= T::zero() {
            return T::zero();
        }
        if u >= T::one() {
            return T::one();
        }
        self.alt_ccdf(self.critical_value(u))
    }

    fn check_u(op: &'static str, u: T) -> Result<()> {
        if !(u >= T::zero() && u <= T::one()) {
            return Err(Error::domain(op, format!("u must lie in [0, 1], got {u}")));
        }
        Ok(())
    }

    /// Mixture CDF `G(u)`.
    pub fn g_cdf(&self, u: T) -> Result<T> {
        Self::check_u("g_cdf", u)?;
        Ok(self.g_raw(u))
    }

    pub(crate) fn g_raw(&self, u: T) -> T {
        (T::one() - self.r) * u + self.r * self.h(u)
    }

    /// Null part `G₀(u) = (1 − r) u`.
    pub fn g0(&self, u: T) -> Result<T> {
        Self::check_u("g0", u)?;
        Ok((T::one() - self.r) * u)
    }

    /// Non-null part `G₁(u) = r H(u)`.
    pub fn g1(&self, u: T) -> Result<T> {
        Self::check_u("g1", u)?;
        Ok(self.r * self.h(u))
    }

    /// Density ratio `f_A(x) / f₀(x)` at the critical value for level `u`.
    pub fn likelihood_ratio(&self, u: T) -> T {
        let x = self.critical_value(u);
        self.alt_pdf(x) / self.null.pdf_raw(x)
    }

    /// Derivative `Ġ(u) = (1 − r) + r f_A(x)/f₀(x)`, `x = F̄₀⁻¹(u)`.
    ///
    /// Falls back to a central difference of `G` when the density ratio is
    /// not finite (extreme tails); errors if both paths fail.
    pub fn g_deriv(&self, u: T) -> Result<T> {
        if !(u > T::zero() && u < T::one()) {
            return Err(Error::domain("g_deriv", format!("u must lie in (0, 1), got {u}")));
        }
        let ratio = self.likelihood_ratio(u);
        if ratio.is_finite() {
            return Ok((T::one() - self.r) + self.r * ratio);
        }
        let h = (c::<T>(1e-4) * u).min(c::<T>(0.5) * (T::one() - u));
        let d = (self.g_raw(u + h) - self.g_raw(u - h)) / (h + h);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::numerical("g_deriv", format!("density ratio overflowed at u = {u}")))
        }
    }

    /// Scans a log-spaced grid on `(1e-8, 1)` for an increase of `Ġ`;
    /// returns the offending `u`, if any.
    pub fn concavity_violation(&self) -> Option<T> {
        let lo = c::<T>(1e-8).ln();
        let hi = c::<T>(1.0 - 1e-9).ln();
        let mut prev: Option<T> = None;
        for i in 0..CONCAVITY_GRID {
            let t = c::<T>(i as f64) / c((CONCAVITY_GRID - 1) as f64);
            let u = (lo + (hi - lo) * t).exp();
            let d = self.g_deriv(u).ok()?;
            if let Some(p) = prev {
                if d > p * (T::one() + c::<T>(1e-9)) + c::<T>(1e-12) {
                    return Some(u);
                }
            }
            prev = Some(d);
        }
        None
    }
}
