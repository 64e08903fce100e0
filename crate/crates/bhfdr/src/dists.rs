//! Two-sided (folded) test-statistic laws.
//!
//! A [`TestDist`] is the law of `|X|` where `X` is either a (non)central
//! Student t with `df` degrees of freedom or a unit-variance normal with
//! mean `ncp`. The folded t is evaluated through its representation as a
//! Poisson mixture of beta laws (`X²` is a noncentral F(1, df) variable), so
//! tail probabilities and densities are sums of positive terms and keep full
//! relative accuracy far into the tails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, Real};
use crate::specfun::{
    ibeta_inv_pair, ibeta_pair, ln_beta_pdf, ln_beta_raw, ln_gamma_raw, norm_cdf, norm_pdf,
    norm_quantile_raw, norm_sf,
};

/// Distribution family of a test statistic before folding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Student t with `df` degrees of freedom (noncentral when `ncp > 0`).
    FoldedT,
    /// Normal with unit variance and mean `ncp`.
    FoldedNormal,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::FoldedT => write!(f, "folded_t"),
            Family::FoldedNormal => write!(f, "folded_normal"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "folded_t" | "t" => Ok(Family::FoldedT),
            "folded_normal" | "normal" | "z" => Ok(Family::FoldedNormal),
            other => Err(Error::Config(format!("unknown family '{other}' (expected folded_t or folded_normal)"))),
        }
    }
}

/// Law of the absolute value of a (non)central t or normal variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestDist<T: Real> {
    family: Family,
    df: T,
    ncp: T,
}

/// Poisson weights below this are dropped from the mixture sums.
const POISSON_CUTOFF: f64 = 1e-17;

/// Sums `Σ_j w_j · term(j)` over Poisson(λ) weights, walking outward from
/// the mode until the weights become negligible.
fn poisson_sum<T: Real, F: FnMut(usize, T) -> T>(lambda: T, mut term: F) -> T {
    let (first, weights) = poisson_weights(lambda);
    weights
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &w)| acc + term(first + i, w))
}

/// Poisson(λ) probabilities that exceed the cutoff, as `(first index, weights)`.
fn poisson_weights<T: Real>(lambda: T) -> (usize, Vec<T>) {
    if lambda <= T::zero() {
        return (0, vec![T::one()]);
    }
    let cutoff: T = c(POISSON_CUTOFF);
    let mode = lambda.floor();
    let k = mode.to_usize().unwrap_or(0);
    let w_mode = (-lambda + mode * lambda.ln() - ln_gamma_raw(mode + T::one())).exp();
    let mut below = Vec::new();
    let mut w = w_mode;
    let mut j = k;
    while j > 0 {
        w = w * c::<T>(j as f64) / lambda;
        j -= 1;
        if w < cutoff {
            j += 1;
            break;
        }
        below.push(w);
    }
    let first = j;
    below.reverse();
    below.push(w_mode);
    let mut w = w_mode;
    let mut j = k;
    loop {
        j += 1;
        w = w * lambda / c(j as f64);
        if w < cutoff {
            break;
        }
        below.push(w);
    }
    // The modal weight carries the rounding of exp(ln Γ); normalising keeps
    // Σ w = 1 to machine precision, so tails near 1 stay accurate.
    let total = below.iter().fold(T::zero(), |acc, &w| acc + w);
    for w in &mut below {
        *w = *w / total;
    }
    (first, below)
}

/// Folded-t tails `(P{|T| ≤ x}, P{|T| > x})` for `x > 0`.
///
/// `T²` is noncentral F(1, df, ncp²), a Poisson(ncp²/2) mixture of
/// Beta(j + ½, df/2) laws in `xb = x²/(df + x²)`. The incomplete beta values
/// are obtained from two continued-fraction evaluations and the positive
/// recurrences `I_x(a, b) = I_x(a + 1, b) + t(a)`,
/// `t(a) = x^a y^b / (a B(a, b))`, so every term is added, never subtracted.
fn folded_t_tails<T: Real>(x: T, df: T, ncp: T) -> (T, T) {
    let x2 = x * x;
    let denom = df + x2;
    let xb = x2 / denom;
    let yb = df / denom;
    let b = c::<T>(0.5) * df;
    let lambda = c::<T>(0.5) * ncp * ncp;
    let (first, weights) = poisson_weights(lambda);
    let last = first + weights.len() - 1;
    let a_of = |j: usize| c::<T>(j as f64 + 0.5);
    // t(a) and its ratio t(a + 1)/t(a) = xb (a + b)/(a + 1).
    let t_of = |a: T| (a * xb.ln() + b * yb.ln() - ln_beta_raw(a, b) - a.ln()).exp();

    // Upper tails, recurring upward from the first index.
    let mut upper_sum = T::zero();
    let mut up = ibeta_pair(xb, yb, a_of(first), b).1;
    let mut t = t_of(a_of(first));
    for (i, &w) in weights.iter().enumerate() {
        upper_sum = upper_sum + w * up;
        if i + 1 < weights.len() {
            let a = a_of(first + i);
            up = up + t;
            t = t * xb * (a + b) / (a + T::one());
        }
    }

    // Lower tails, recurring downward from the last index.
    let mut lower_sum = T::zero();
    let mut lo = ibeta_pair(xb, yb, a_of(last), b).0;
    let mut t = T::zero();
    for (i, &w) in weights.iter().enumerate().rev() {
        if i + 1 < weights.len() {
            let a = a_of(first + i);
            // Subnormal terms have lost precision that the ratio would
            // amplify; restart from the closed form until t is normal.
            t = if t < T::min_positive_value() { t_of(a) } else { t * (a + T::one()) / (xb * (a + b)) };
            lo = lo + t;
        }
        lower_sum = lower_sum + w * lo;
    }
    (lower_sum, upper_sum)
}

impl<T: Real> TestDist<T> {
    /// Folded (non)central t with `df > 0` degrees of freedom and `ncp ≥ 0`.
    pub fn folded_t(df: T, ncp: T) -> Result<Self> {
        if !(df > T::zero()) || !df.is_finite() {
            return Err(Error::domain("TestDist::folded_t", format!("df must be positive, got {df}")));
        }
        Self::check_ncp(ncp)?;
        Ok(Self { family: Family::FoldedT, df, ncp })
    }

    /// Folded normal with unit variance and mean `ncp ≥ 0`.
    pub fn folded_normal(ncp: T) -> Result<Self> {
        Self::check_ncp(ncp)?;
        Ok(Self { family: Family::FoldedNormal, df: T::infinity(), ncp })
    }

    /// Builds a member of `family`; `df` is ignored for the normal family.
    pub fn new(family: Family, df: T, ncp: T) -> Result<Self> {
        match family {
            Family::FoldedT => Self::folded_t(df, ncp),
            Family::FoldedNormal => Self::folded_normal(ncp),
        }
    }

    fn check_ncp(ncp: T) -> Result<()> {
        if !(ncp >= T::zero()) || !ncp.is_finite() {
            return Err(Error::domain("TestDist", format!("ncp must be finite and non-negative, got {ncp}")));
        }
        Ok(())
    }

    /// The central member of the same family (same `df`).
    pub fn central(&self) -> Self {
        Self { ncp: T::zero(), ..*self }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Degrees of freedom (`+∞` for the normal family).
    pub fn df(&self) -> T {
        self.df
    }

    pub fn ncp(&self) -> T {
        self.ncp
    }

    /// `P{|X| > x}`.
    pub fn ccdf(&self, x: T) -> Result<T> {
        Self::check_x("ccdf", x)?;
        Ok(self.ccdf_raw(x))
    }

    /// `P{|X| ≤ x}`.
    pub fn cdf(&self, x: T) -> Result<T> {
        Self::check_x("cdf", x)?;
        Ok(self.tails_raw(x).0)
    }

    /// Density of `|X|` at `x`.
    pub fn pdf(&self, x: T) -> Result<T> {
        Self::check_x("pdf", x)?;
        Ok(self.pdf_raw(x))
    }

    /// Inverse survival function: the `x ≥ 0` with `P{|X| > x} = p`.
    pub fn inv_ccdf(&self, p: T) -> Result<T> {
        if !(p > T::zero() && p <= T::one()) {
            return Err(Error::domain("inv_ccdf", format!("p must lie in (0, 1], got {p}")));
        }
        Ok(self.inv_ccdf_raw(p))
    }

    fn check_x(op: &'static str, x: T) -> Result<()> {
        if !(x >= T::zero()) {
            return Err(Error::domain(op, format!("x must be non-negative, got {x}")));
        }
        Ok(())
    }

    /// `(P{|X| ≤ x}, P{|X| > x})`, both with full relative accuracy.
    pub(crate) fn tails_raw(&self, x: T) -> (T, T) {
        if x <= T::zero() {
            return (T::zero(), T::one());
        }
        if x.is_infinite() {
            return (T::one(), T::zero());
        }
        match self.family {
            Family::FoldedNormal => {
                let upper = norm_sf(x - self.ncp) + norm_sf(x + self.ncp);
                let lower = norm_cdf(x - self.ncp) - norm_sf(x + self.ncp);
                (lower, upper)
            }
            Family::FoldedT => {
                let (lower, upper) = folded_t_tails(x, self.df, self.ncp);
                (lower.min(T::one()), upper.min(T::one()))
            }
        }
    }

    pub(crate) fn ccdf_raw(&self, x: T) -> T {
        self.tails_raw(x).1
    }

    pub(crate) fn pdf_raw(&self, x: T) -> T {
        match self.family {
            Family::FoldedNormal => norm_pdf(x - self.ncp) + norm_pdf(x + self.ncp),
            Family::FoldedT => {
                let lambda = c::<T>(0.5) * self.ncp * self.ncp;
                let half_df = c::<T>(0.5) * self.df;
                if x <= T::zero() {
                    // Only the j = 0 component has mass at the origin.
                    return c::<T>(2.0) * (-lambda).exp()
                        / (self.df.sqrt() * ln_beta_raw(c(0.5), half_df).exp());
                }
                let x2 = x * x;
                let denom = self.df + x2;
                let xb = x2 / denom;
                let yb = self.df / denom;
                // d(xb)/dx = 2 x df / (df + x²)².
                let ln_jac = (c::<T>(2.0) * x * self.df).ln() - c::<T>(2.0) * denom.ln();
                poisson_sum(lambda, |j, w| {
                    w * (ln_jac + ln_beta_pdf(xb, yb, c::<T>(j as f64 + 0.5), half_df)).exp()
                })
            }
        }
    }

    pub(crate) fn inv_ccdf_raw(&self, p: T) -> T {
        if p >= T::one() {
            return T::zero();
        }
        if self.ncp == T::zero() {
            match self.family {
                Family::FoldedNormal => return -norm_quantile_raw(c::<T>(0.5) * p),
                Family::FoldedT => {
                    // P{|T| > t} = I_y(df/2, ½) with y = df/(df + t²); solve for
                    // the complementary variable xb = t²/(df + t²) directly.
                    let q = T::one() - p;
                    let (xb, yb) = ibeta_inv_pair(q, p, c(0.5), c::<T>(0.5) * self.df);
                    return (self.df * xb / yb).sqrt();
                }
            }
        }
        self.inv_ccdf_search(p)
    }

    /// Safeguarded Newton search for noncentral members.
    fn inv_ccdf_search(&self, p: T) -> T {
        let mut lo = T::zero();
        let mut hi = self.ncp.max(T::one());
        while self.ccdf_raw(hi) > p {
            lo = hi;
            hi = hi * c(2.0);
            if !hi.is_finite() {
                return T::infinity();
            }
        }
        let mut x = c::<T>(0.5) * (lo + hi);
        let eps = T::epsilon();
        for _ in 0..300 {
            let (_, up) = self.tails_raw(x);
            let err = up - p;
            if err == T::zero() {
                return x;
            }
            if err > T::zero() {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x + err / self.pdf_raw(x);
            if !(next > lo && next < hi) || !next.is_finite() {
                next = c::<T>(0.5) * (lo + hi);
            }
            if (next - x).abs() <= c::<T>(4.0) * eps * next.abs() || hi - lo <= c::<T>(4.0) * eps * hi {
                return next;
            }
            x = next;
        }
        x
    }
}

/// `(P{T ≤ t}, P{T > t})` for `t ≥ 0` and a noncentral t with parameter
/// `delta` of either sign (series in Poisson-weighted incomplete beta terms).
fn nct_tails<T: Real>(t: T, df: T, delta: T) -> (T, T) {
    let t2 = t * t;
    let denom = df + t2;
    let xb = t2 / denom;
    let yb = df / denom;
    let half_df = c::<T>(0.5) * df;
    let lambda = c::<T>(0.5) * delta * delta;
    if lambda == T::zero() {
        let (lo, up) = ibeta_pair(xb, yb, c(0.5), half_df);
        return (c::<T>(0.5) + c::<T>(0.5) * lo, c::<T>(0.5) * up);
    }
    // q_j / p_j = (|δ|/√2) Γ(j+1) / Γ(j+3/2), with the sign of δ.
    let sgn = if delta < T::zero() { -T::one() } else { T::one() };
    let ln_scale = (delta.abs() / T::SQRT_2()).ln();
    let mut upper = T::zero();
    let sum_lower = poisson_sum(lambda, |j, w| {
        let jf: T = c(j as f64);
        let ratio = sgn * (ln_scale + ln_gamma_raw(jf + T::one()) - ln_gamma_raw(jf + c(1.5))).exp();
        let (lo_p, up_p) = ibeta_pair(xb, yb, jf + c(0.5), half_df);
        let (lo_q, up_q) = ibeta_pair(xb, yb, jf + T::one(), half_df);
        upper = upper + w * (up_p + ratio * up_q);
        w * (lo_p + ratio * lo_q)
    });
    let lower = norm_cdf(-delta) + c::<T>(0.5) * sum_lower;
    (lower, c::<T>(0.5) * upper)
}

/// CDF of the (signed) noncentral t distribution with `df` degrees of
/// freedom and noncentrality `ncp`.
pub fn nct_cdf<T: Real>(t: T, df: T, ncp: T) -> Result<T> {
    if !(df > T::zero()) {
        return Err(Error::domain("nct_cdf", format!("df must be positive, got {df}")));
    }
    if t.is_nan() || !ncp.is_finite() {
        return Err(Error::domain("nct_cdf", "arguments must be finite"));
    }
    if t >= T::zero() {
        Ok(nct_tails(t, df, ncp).0)
    } else {
        // P{T ≤ t} = P{−T ≥ −t}, and −T is noncentral t with −ncp.
        Ok(nct_tails(-t, df, -ncp).1)
    }
}
