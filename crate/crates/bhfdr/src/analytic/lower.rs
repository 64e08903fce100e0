//! Finite-`m` lower bound on the average power.
//!
//! Conditionally on `M_m = ℓ` non-null tests, the BH procedure rejects the
//! `s`-th smallest non-null p-value whenever it is below `s f / m`, so
//! `E[S_m/M_m | M_m = ℓ] ≥ (1/ℓ) Σ_{s=1}^{ℓ} P{P₁,(s) ≤ s f/m}`. The non-null
//! p-values are i.i.d. with CDF `H`, so `P{P₁,(s) ≤ t} = I_{H(t)}(s, ℓ − s + 1)`.
//! Averaging over `M_m ~ Binomial(m, r)` gives the bound.

use serde::{Deserialize, Serialize};

use super::DesignPoint;
use crate::error::Result;
use crate::scalar::{c, Real};
use crate::specfun::{ibeta_pair, ln_gamma_raw};

/// Half-width of the binomial window, in standard deviations.
pub const LOWER_BOUND_SPREAD: f64 = 10.0;

/// Lower bound value with its certified truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct LowerBound<T: Real> {
    pub value: T,
    /// Binomial mass outside the summation window (an upper bound on the
    /// omitted contribution, since each conditional term is at most 1).
    pub truncated_mass: T,
    pub l_min: u64,
    pub l_max: u64,
}

/// Lower bound on the finite-`m` average power of BH(`f`).
pub fn avg_power_lower_bound<T: Real>(dp: &DesignPoint<T>) -> Result<LowerBound<T>> {
    let mm = dp.model()?;
    let m = dp.m;
    let mf: T = c(m as f64);
    let r = dp.r;
    let mean = mf * r;
    let sd = (mean * (T::one() - r)).sqrt();
    let spread = c::<T>(LOWER_BOUND_SPREAD) * sd;
    let l_min = (mean - spread).floor().max(T::one()).as_f64() as u64;
    let l_max = ((mean + spread).ceil().as_f64() as u64).clamp(l_min, m);

    // H(s f / m) for s = 1..=l_max.
    let hs: Vec<T> = (1..=l_max).map(|s| mm.h(c::<T>(s as f64) * dp.f / mf)).collect();

    let ln_r = r.ln();
    let ln_q = (-r).ln_1p();
    let ln_choose = |l: u64| {
        ln_gamma_raw(mf + T::one()) - ln_gamma_raw(c::<T>(l as f64) + T::one())
            - ln_gamma_raw(c::<T>((m - l) as f64) + T::one())
    };
    let mut value = T::zero();
    let mut mass = T::zero();
    for l in l_min..=l_max {
        let lf: T = c(l as f64);
        let w = (ln_choose(l) + lf * ln_r + (mf - lf) * ln_q).exp();
        mass = mass + w;
        let mut inner = T::zero();
        for s in 1..=l {
            let h = hs[(s - 1) as usize];
            // P{Beta(s, ℓ − s + 1) ≤ h}.
            inner = inner + ibeta_pair(h, T::one() - h, c(s as f64), c((l - s + 1) as f64)).0;
        }
        value = value + w * inner / lf;
    }
    // Mass at ℓ = 0 contributes nothing (TPF is defined as 0 there) and is
    // not an omission.
    let p0 = (mf * ln_q).exp();
    let truncated_mass = (T::one() - mass - p0).max(T::zero());
    Ok(LowerBound { value, truncated_mass, l_min, l_max })
}
