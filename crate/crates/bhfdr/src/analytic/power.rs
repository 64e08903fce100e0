//! Limiting positive-call fraction and average power.

use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::scalar::{c, Real};

/// Points in the geometric bracketing scan for `γ`.
const GAMMA_SCAN_POINTS: usize = 64;
/// Smallest `u` examined by the scan.
const GAMMA_SCAN_FLOOR: f64 = 1e-14;

/// Largest root `γ` of `G(u f) = u`, or 0 when no nonzero root exists.
///
/// `H(u) = G(u f) − u` is scanned on a geometric grid from 1 downward; the
/// first grid point with `H > 0` brackets the largest root together with its
/// predecessor, and the bracket is refined by Illinois-modified regula falsi
/// to relative width of a few ulps. Concavity of `G` makes `H` positive on
/// all of `(0, γ)`, so a scan that finds no positive value means `γ = 0`.
pub fn solve_gamma<T: Real>(mm: &MixtureModel<T>, f: T) -> T {
    let h = |u: T| mm.g_raw(u * f) - u;
    let ratio = (c::<T>(GAMMA_SCAN_FLOOR).ln() / c((GAMMA_SCAN_POINTS - 1) as f64)).exp();
    let mut hi = T::one();
    let mut h_hi = h(hi);
    let mut lo = T::zero();
    let mut h_lo = T::zero();
    let mut u = T::one();
    let mut found = false;
    for _ in 1..GAMMA_SCAN_POINTS {
        u = u * ratio;
        let hu = h(u);
        if hu > T::zero() {
            lo = u;
            h_lo = hu;
            found = true;
            break;
        }
        hi = u;
        h_hi = hu;
    }
    if !found {
        return T::zero();
    }
    // Illinois iteration on [lo, hi] with h(lo) > 0 ≥ h(hi).
    let eps = T::epsilon();
    let mut side = 0i8;
    for _ in 0..200 {
        let mut x = (lo * h_hi - hi * h_lo) / (h_hi - h_lo);
        if !(x > lo && x < hi) {
            x = c::<T>(0.5) * (lo + hi);
        }
        let hx = h(x);
        if hx > T::zero() {
            lo = x;
            h_lo = hx;
            if side == 1 {
                h_hi = h_hi * c(0.5);
            }
            side = 1;
        } else if hx < T::zero() {
            hi = x;
            h_hi = hx;
            if side == -1 {
                h_lo = h_lo * c(0.5);
            }
            side = -1;
        } else {
            return x;
        }
        if hi - lo <= c::<T>(4.0) * eps * hi {
            break;
        }
    }
    c::<T>(0.5) * (lo + hi)
}

/// Plug-in (infinitely-many-tests) average power `F̄_A(F̄₀⁻¹(γ f))`; 0 for
/// degenerate designs.
pub fn avg_power_ist<T: Real>(mm: &MixtureModel<T>, f: T) -> T {
    let gamma = solve_gamma(mm, f);
    if gamma <= T::zero() {
        return T::zero();
    }
    mm.h(gamma * f)
}

/// Average power at the oracle threshold, i.e. BH run at nominal FDR
/// `f / (1 − r)` so that the delivered FDR is exactly `f`.
pub fn oracle_power<T: Real>(mm: &MixtureModel<T>, f: T) -> Result<T> {
    let fo = f / (T::one() - mm.r());
    if !(fo < T::one()) {
        return Err(Error::domain("oracle_power", format!("f/(1 − r) = {fo} must be below 1")));
    }
    Ok(avg_power_ist(mm, fo))
}
