//! Reduced nominal FDRs that bound the false-discovery fraction with high
//! probability, using the CLT for `T_m/J_m`.

use serde::{Deserialize, Serialize};

use super::clt::clt_variances;
use super::samplesize::{sample_size_avg, sample_size_lambda};
use super::DesignPoint;
use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::scalar::{c, Real};
use crate::specfun::norm_quantile_raw;

/// How `α` (and `γ`) enter the equation for the reduced FDR `f′`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// `α` is re-evaluated at every candidate `f′`, i.e. it is the FDF
    /// standard deviation of the procedure actually run, BH(`f′`).
    #[default]
    Recompute,
    /// `α` is evaluated once at the original FDR `f` and held fixed.
    Fixed,
}

/// Smallest `m` for which the closed-form reduced FDR is positive.
pub fn min_feasible_m<T: Real>(alpha: T, r: T, f: T) -> u64 {
    let f0 = (T::one() - r) * f;
    let z = norm_quantile_raw(T::one() - (T::one() - r) * f0);
    let root = alpha * z / (f * (T::one() - r));
    (root * root).floor().as_f64() as u64 + 1
}

/// Closed-form reduced FDR `f″ = f − α/(√m (1 − r)) · Φ⁻¹(1 − (1 − r) f₀)`
/// with `α` evaluated at `f`.
pub fn reduced_fdr_closed<T: Real>(mm: &MixtureModel<T>, f: T, m: u64) -> Result<T> {
    let v = clt_variances(mm, f)?;
    let r = mm.r();
    let alpha = v.alpha2.sqrt();
    let z = norm_quantile_raw(T::one() - (T::one() - r) * v.f0);
    let fpp = f - alpha / (c::<T>(m as f64).sqrt() * (T::one() - r)) * z;
    if fpp > T::zero() {
        Ok(fpp)
    } else {
        let min_m = min_feasible_m(alpha, r, f);
        Err(Error::InfeasibleBound {
            msg: format!("closed-form reduced FDR is {fpp} ≤ 0 at m = {m}; feasible for m ≥ {min_m}"),
            min_feasible_m: Some(min_m),
        })
    }
}

/// Points in the downward scan for the largest root of the `f′` equation.
const FPRIME_SCAN_POINTS: usize = 120;

/// Reduced FDR `f′` solving `f₀ = (1 − r) f′ + α/√m · Φ⁻¹(1 − (1 − r) f′)`,
/// where `f₀ = (1 − r) f`. The largest root in `(0, f]` is returned.
///
/// The residual is positive at `f′ = f`; it is scanned downward on a linear
/// grid until it turns negative and the bracket is refined by bisection.
/// When no root exists the error carries the smallest `m` for which one
/// does (feasibility is monotone in `m` because the `α/√m` term shrinks).
pub fn reduced_fdr_numeric<T: Real>(mm: &MixtureModel<T>, f: T, m: u64, mode: AlphaMode) -> Result<T> {
    let fixed_alpha = match mode {
        AlphaMode::Fixed => Some(clt_variances(mm, f)?.alpha2.sqrt()),
        AlphaMode::Recompute => None,
    };
    if let Some(x) = solve_reduced(mm, f, m, fixed_alpha) {
        return Ok(x);
    }
    let feasible = |m: u64| solve_reduced(mm, f, m, fixed_alpha).is_some();
    let mut lo = m;
    let mut hi = m.max(1);
    let min_m = loop {
        hi = hi.saturating_mul(2);
        if feasible(hi) {
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if feasible(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            break Some(hi);
        }
        if hi == u64::MAX {
            break None;
        }
        lo = hi;
    };
    Err(Error::InfeasibleBound {
        msg: format!("no reduced FDR in (0, {f}] bounds the FDF at m = {m}"),
        min_feasible_m: min_m,
    })
}

/// Largest root of the `f′` equation at `m`, or `None` if the downward scan
/// finds no sign change. `fixed_alpha` holds `α` for [`AlphaMode::Fixed`].
fn solve_reduced<T: Real>(mm: &MixtureModel<T>, f: T, m: u64, fixed_alpha: Option<T>) -> Option<T> {
    let r = mm.r();
    let one = T::one();
    let f0 = (one - r) * f;
    let sm = c::<T>(m as f64).sqrt();
    let residual = |x: T| -> T {
        let alpha = match fixed_alpha {
            Some(a) => a,
            None => match clt_variances(mm, x) {
                Ok(v) => v.alpha2.sqrt(),
                Err(_) => return T::infinity(),
            },
        };
        (one - r) * x + alpha / sm * norm_quantile_raw(one - (one - r) * x) - f0
    };
    let step = f / c(FPRIME_SCAN_POINTS as f64);
    let mut hi = f;
    let mut lo = None;
    for k in 1..FPRIME_SCAN_POINTS {
        let x = f - step * c(k as f64);
        if residual(x) < T::zero() {
            lo = Some(x);
            break;
        }
        hi = x;
    }
    let mut lo = lo?;
    // residual(lo) < 0 ≤ residual(hi).
    for _ in 0..200 {
        let mid = c::<T>(0.5) * (lo + hi);
        if residual(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= c::<T>(4.0) * T::epsilon() * hi {
            break;
        }
    }
    Some(c::<T>(0.5) * (lo + hi))
}

/// Reduced FDR and the four sample sizes of an FDF-bounding design:
/// average power under BH(`f`) and BH(`f′`), and λ-power under BH(`f`) and
/// BH(`f′`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct FdrDesign<T: Real> {
    pub f_prime: T,
    pub n00: u32,
    pub n01: u32,
    pub n10: u32,
    pub n11: u32,
    /// Fixed-point iterations used to reconcile `f′` with `n11`.
    pub iterations: u32,
}

/// Sizes an FDF-bounding study at `target` power.
///
/// The reduced FDR depends on the sample size through `α`, and the sample
/// size for λ-power under BH(`f′`) depends on `f′`; the pair (`f′`, `n11`)
/// is therefore solved jointly by fixed-point iteration starting from `f`.
/// The design's own `n` is ignored.
pub fn reduced_fdr_design<T: Real>(
    dp: &DesignPoint<T>,
    target: T,
    lambda: T,
    n_max: u32,
) -> Result<FdrDesign<T>> {
    let f = dp.f;
    let m = dp.m;
    let n00 = sample_size_avg(dp, f, target, n_max)?;
    let n10 = sample_size_lambda(dp, f, m, lambda, target, n_max)?;
    let mut x = f;
    let mut n11 = n10;
    let mut iterations = 0u32;
    let mut seen: Vec<u32> = Vec::new();
    for _ in 0..50 {
        iterations += 1;
        let x_new = reduced_fdr_numeric(&dp.with_n(n11).model()?, f, m, AlphaMode::Recompute)?;
        let n_new = sample_size_lambda(dp, x_new, m, lambda, target, n_max)?;
        let converged = n_new == n11;
        x = x_new;
        n11 = n_new;
        if converged || seen.contains(&n_new) {
            break;
        }
        seen.push(n_new);
    }
    let n01 = sample_size_avg(dp, x, target, n_max)?;
    Ok(FdrDesign { f_prime: x, n00, n01, n10, n11, iterations })
}
