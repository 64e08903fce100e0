//! Range-scaled partial derivatives of the average power.

use serde::{Deserialize, Serialize};

use super::power::avg_power_ist;
use super::DesignPoint;
use crate::error::{Error, Result};
use crate::scalar::{c, Real};

/// Closed interval of a design parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ParamRange<T: Real> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> ParamRange<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// Ranges used to scale the partials of `π` in `r`, `θ` and `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct PartialRanges<T: Real> {
    pub r: ParamRange<T>,
    pub theta: ParamRange<T>,
    pub f: ParamRange<T>,
}

/// `(hi − lo) · ∂π/∂x` for each parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Partials<T: Real> {
    pub d_r: T,
    pub d_theta: T,
    pub d_f: T,
}

/// Central-difference partials of the plug-in average power, each scaled
/// by the width of its parameter range. `rel_step` is the difference step
/// as a fraction of the range width (e.g. `1e-3`).
pub fn power_partials<T: Real>(dp: &DesignPoint<T>, ranges: &PartialRanges<T>, rel_step: T) -> Result<Partials<T>> {
    dp.validate()?;
    let inside = |name: &str, x: T, rg: &ParamRange<T>| -> Result<T> {
        if !(x > rg.lo && x < rg.hi) {
            return Err(Error::Boundary(format!("{name} = {x} is not interior to [{}, {}]", rg.lo, rg.hi)));
        }
        let h = rg.width() * rel_step;
        if !(x - h > rg.lo && x + h < rg.hi) {
            return Err(Error::Boundary(format!("step for {name} leaves [{}, {}]", rg.lo, rg.hi)));
        }
        Ok(h)
    };
    let power = |d: DesignPoint<T>| -> Result<T> { Ok(avg_power_ist(&d.model()?, d.f)) };
    let diff = |lo: DesignPoint<T>, hi: DesignPoint<T>, h: T, width: T| -> Result<T> {
        lo.validate().map_err(|e| Error::Boundary(e.to_string()))?;
        hi.validate().map_err(|e| Error::Boundary(e.to_string()))?;
        Ok((power(hi)? - power(lo)?) / (c::<T>(2.0) * h) * width)
    };
    let hr = inside("r", dp.r, &ranges.r)?;
    let ht = inside("theta", dp.theta, &ranges.theta)?;
    let hf = inside("f", dp.f, &ranges.f)?;
    let d_r = diff(DesignPoint { r: dp.r - hr, ..*dp }, DesignPoint { r: dp.r + hr, ..*dp }, hr, ranges.r.width())?;
    let d_theta = diff(
        DesignPoint { theta: dp.theta - ht, ..*dp },
        DesignPoint { theta: dp.theta + ht, ..*dp },
        ht,
        ranges.theta.width(),
    )?;
    let d_f = diff(DesignPoint { f: dp.f - hf, ..*dp }, DesignPoint { f: dp.f + hf, ..*dp }, hf, ranges.f.width())?;
    Ok(Partials { d_r, d_theta, d_f })
}
