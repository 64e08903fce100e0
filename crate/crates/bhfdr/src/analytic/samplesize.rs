//! Per-group sample sizes for a target average power or λ-power.

use super::clt::clt_variances;
use super::power::avg_power_ist;
use super::DesignPoint;
use crate::error::{Error, Result};
use crate::scalar::{c, Real};

/// Default upper limit of the sample-size search.
pub const DEFAULT_N_MAX: u32 = 1_000_000;

/// Smallest `n ≥ 2` with `eval(n) ≥ target`, by exponential bracketing from
/// `n = 2` followed by bisection. Every evaluated point is kept and the
/// criterion is checked to be nondecreasing over them, so a non-monotone
/// criterion is reported instead of silently producing a wrong size.
fn search<T: Real, F: FnMut(u32) -> Result<T>>(mut eval: F, target: T, n_max: u32) -> Result<u32> {
    let mut seen: Vec<(u32, T)> = Vec::new();
    let mut probe = |n: u32, seen: &mut Vec<(u32, T)>| -> Result<T> {
        let v = eval(n)?;
        seen.push((n, v));
        Ok(v)
    };
    let mut lo = 2u32;
    if probe(lo, &mut seen)? >= target {
        return Ok(lo);
    }
    let mut hi = 4u32;
    loop {
        if probe(hi, &mut seen)? >= target {
            break;
        }
        if hi >= n_max {
            let best = seen.iter().map(|&(_, v)| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::SearchExhausted { n_max, best, target: target.as_f64() });
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(n_max);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid, &mut seen)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    seen.sort_by_key(|&(n, _)| n);
    let slack = c::<T>(1e-9);
    for w in seen.windows(2) {
        if w[1].1 + slack < w[0].1 {
            return Err(Error::numerical(
                "sample_size",
                format!("criterion decreases between n = {} ({}) and n = {} ({})", w[0].0, w[0].1, w[1].0, w[1].1),
            ));
        }
    }
    Ok(hi)
}

/// Smallest per-group `n` whose plug-in average power under BH(`f`) reaches
/// `target`. The design's own `n` and `f` are ignored.
pub fn sample_size_avg<T: Real>(dp: &DesignPoint<T>, f: T, target: T, n_max: u32) -> Result<u32> {
    if !(target > T::zero() && target < T::one()) {
        return Err(Error::domain("sample_size_avg", format!("target must lie in (0, 1), got {target}")));
    }
    let base = dp.with_f(f);
    search(|n| Ok(avg_power_ist(&base.with_n(n).model()?, f)), target, n_max)
}

/// Smallest per-group `n` whose CLT λ-power under BH(`f`) with `m` tests
/// reaches `target`. Degenerate designs count as λ-power 0.
pub fn sample_size_lambda<T: Real>(
    dp: &DesignPoint<T>,
    f: T,
    m: u64,
    lambda: T,
    target: T,
    n_max: u32,
) -> Result<u32> {
    if !(target > T::zero() && target < T::one()) {
        return Err(Error::domain("sample_size_lambda", format!("target must lie in (0, 1), got {target}")));
    }
    let base = dp.with_f(f);
    search(
        |n| match clt_variances(&base.with_n(n).model()?, f) {
            Ok(v) => Ok(v.lambda_power(m, lambda)),
            Err(Error::DegenerateDesign) => Ok(T::zero()),
            Err(e) => Err(e),
        },
        target,
        n_max,
    )
}
