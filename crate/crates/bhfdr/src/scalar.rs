//! Scalar abstraction shared by the analytic layers.
//!
//! Special functions, distributions, the mixture model and the analytic
//! formulas are written once against [`Real`] and instantiated for `f32` and
//! `f64`. The Monte-Carlo engine and the grid runner are `f64`-only.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the analytic code: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or intermediate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Widen to `f64` (used for reporting and serialisation).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for [`Real::lit`].
#[inline]
pub(crate) fn c<T: Real>(x: f64) -> T {
    T::lit(x)
}
