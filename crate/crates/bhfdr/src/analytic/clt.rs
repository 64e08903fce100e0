//! Asymptotic variances of the positive-call, true-positive and
//! false-discovery fractions, and the λ-power / FDF-quantile approximations
//! built on them.

use serde::{Deserialize, Serialize};

use super::power::solve_gamma;
use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::scalar::{c, Real};
use crate::specfun::{norm_cdf, norm_quantile_raw};

/// CLT ingredients at the limiting BH threshold `γ f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct CltVariances<T: Real> {
    pub gamma: T,
    /// Average power `π = H(γ f)`.
    pub pi: T,
    /// `Ġ(γ f)`.
    pub gdot: T,
    pub f0: T,
    /// Variance of `√m (J_m/m − γ)`.
    pub tau2: T,
    /// Variance of `√m (S_m/M_m − π)`.
    pub sigma2: T,
    /// Variance of `√m (T_m/J_m − f₀)`.
    pub alpha2: T,
}

/// Computes `τ²`, `σ²`, `α²` for BH at nominal FDR `f`.
pub fn clt_variances<T: Real>(mm: &MixtureModel<T>, f: T) -> Result<CltVariances<T>> {
    let gamma = solve_gamma(mm, f);
    if gamma <= T::zero() {
        return Err(Error::DegenerateDesign);
    }
    let one = T::one();
    let two: T = c(2.0);
    let r = mm.r();
    let t = gamma * f;
    let pi = mm.h(t);
    let gdot = mm.g_deriv(t)?;
    let slope = one - f * gdot;
    if !(slope > T::zero()) {
        return Err(Error::numerical("clt_variances", format!("f Ġ(γ f) = {} is not below 1", f * gdot)));
    }
    let tau2 = gamma * (one - gamma) / (slope * slope);
    let v1 = r * pi - r * r * pi * pi;
    let c01 = -r * (one - r) * gamma * f * pi;
    let g1 = gdot - (one - r);
    let var_x1 = v1 + g1 * g1 * f * f * tau2 + two * f * g1 * (v1 + c01) / slope;
    let cov = r * (one - r) * (pi + f * g1 * (t + pi) / slope);
    let sigma2 = (var_x1 - two * pi * cov + pi * pi * r * (one - r)) / (r * r);
    let f0 = (one - r) * f;
    let alpha2 = f0 * (one - f0 * gamma) / gamma;
    Ok(CltVariances { gamma, pi, gdot, f0, tau2, sigma2, alpha2 })
}

impl<T: Real> CltVariances<T> {
    /// CLT approximation `Φ(√m (π − λ)/σ)` to `P{S_m/M_m > λ}`.
    pub fn lambda_power(&self, m: u64, lambda: T) -> T {
        let sm = c::<T>(m as f64).sqrt();
        norm_cdf(sm * (self.pi - lambda) / self.sigma2.sqrt())
    }

    /// Threshold at which the λ-power equals the average power:
    /// `π − σ/√m · Φ⁻¹(π)`.
    pub fn lambda_eq(&self, m: u64) -> T {
        let sm = c::<T>(m as f64).sqrt();
        self.pi - self.sigma2.sqrt() / sm * norm_quantile_raw(self.pi)
    }

    /// Approximate FDF quantile at upper-tail probability `p`:
    /// `f₀ + α/√m · Φ⁻¹(1 − p)`.
    pub fn fdf_quantile(&self, m: u64, p: T) -> T {
        let sm = c::<T>(m as f64).sqrt();
        self.f0 + self.alpha2.sqrt() / sm * norm_quantile_raw(T::one() - p)
    }
}

/// λ-power of BH(f) with `m` tests.
pub fn lambda_power<T: Real>(mm: &MixtureModel<T>, f: T, m: u64, lambda: T) -> Result<T> {
    Ok(clt_variances(mm, f)?.lambda_power(m, lambda))
}

/// Threshold `λ_eq` at which the λ-power equals the average power.
pub fn lambda_eq<T: Real>(mm: &MixtureModel<T>, f: T, m: u64) -> Result<T> {
    Ok(clt_variances(mm, f)?.lambda_eq(m))
}

/// CLT approximation to the FDF quantile at upper-tail probability `p`.
pub fn fdf_quantile<T: Real>(mm: &MixtureModel<T>, f: T, m: u64, p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::domain("fdf_quantile", format!("p must lie in (0, 1), got {p}")));
    }
    Ok(clt_variances(mm, f)?.fdf_quantile(m, p))
}
