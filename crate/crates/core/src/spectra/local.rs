use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::SpectraError;
use crate::geometry::{exp2i, ols, Point};
use crate::measures::MassOracle;

/// Width of the sliding regression windows in levels.
pub const LOCAL_WINDOW: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalDimEstimate {
    pub point: Point,
    /// Smallest slope over sliding 4-level windows.
    pub lower_slope: f64,
    /// Largest slope over sliding 4-level windows.
    pub upper_slope: f64,
    /// Slope of the fit over the whole level range.
    pub slope: f64,
    pub scale_range: (u32, u32),
}

impl LocalDimEstimate {
    fn infinite(point: Point, scale_range: (u32, u32)) -> Self {
        LocalDimEstimate {
            point,
            lower_slope: f64::INFINITY,
            upper_slope: f64::INFINITY,
            slope: f64::INFINITY,
            scale_range,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.slope.is_infinite()
    }

    pub fn discrepancy(&self) -> f64 {
        self.upper_slope - self.lower_slope
    }
}

/// Slopes of `-log2 mu(B(x, 2^-m))` against `m`. A zero mass at any level
/// yields the infinite-dimension sentinel.
pub fn local_dim(
    oracle: &dyn MassOracle,
    x: &Point,
    levels: RangeInclusive<u32>,
) -> Result<LocalDimEstimate, SpectraError> {
    let (lo, hi) = (*levels.start(), *levels.end());
    let n = levels.clone().count();
    if n < LOCAL_WINDOW {
        return Err(SpectraError::TooFewLevels { got: n, need: LOCAL_WINDOW });
    }
    let mut ms = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for m in levels {
        let mass = oracle.ball_mass(x, exp2i(-(m as i32)))?.mass;
        if mass <= 0.0 {
            return Ok(LocalDimEstimate::infinite(x.clone(), (lo, hi)));
        }
        ms.push(m as f64);
        ys.push(-mass.log2());
    }
    let (slope, _, _) = ols(&ms, &ys);
    let (mut lower, mut upper) = (f64::INFINITY, f64::NEG_INFINITY);
    for w in 0..=n - LOCAL_WINDOW {
        let (s, _, _) = ols(&ms[w..w + LOCAL_WINDOW], &ys[w..w + LOCAL_WINDOW]);
        lower = lower.min(s);
        upper = upper.max(s);
    }
    Ok(LocalDimEstimate { point: x.clone(), lower_slope: lower, upper_slope: upper, slope, scale_range: (lo, hi) })
}

/// Deepest level `m` in `levels` at which the ball `B(x, 2^-m)` still holds
/// at least `min_hits` samples of an empirical oracle (or has positive
/// mass, for exact oracles).
pub fn deepest_resolved_level(
    oracle: &dyn MassOracle,
    x: &Point,
    levels: RangeInclusive<u32>,
    min_hits: u64,
) -> Result<Option<u32>, SpectraError> {
    let mut best = None;
    for m in levels {
        let est = oracle.ball_mass(x, exp2i(-(m as i32)))?;
        let ok = match est.samples {
            Some(n) => (est.mass * n as f64).round() as u64 >= min_hits,
            None => est.mass > 0.0,
        };
        if !ok {
            break;
        }
        best = Some(m);
    }
    Ok(best)
}

/// [`local_dim`] over `first..=m*`, where `m*` is the deepest level up to
/// `last` holding `min_hits` samples. `None` when fewer than `min_levels`
/// levels are resolved.
pub fn resolved_local_dim(
    oracle: &dyn MassOracle,
    x: &Point,
    first: u32,
    last: u32,
    min_hits: u64,
    min_levels: u32,
) -> Result<Option<LocalDimEstimate>, SpectraError> {
    let min_levels = min_levels.max(LOCAL_WINDOW as u32);
    let Some(top) = deepest_resolved_level(oracle, x, first..=last, min_hits)? else {
        return Ok(None);
    };
    if top + 1 < first + min_levels {
        return Ok(None);
    }
    local_dim(oracle, x, first..=top).map(Some)
}

/// Sample minimum of `upper - lower` over points whose lower slope exceeds
/// `threshold`, clamped at zero. `None` when no point qualifies.
pub fn discrepancy_from_estimates(estimates: &[LocalDimEstimate], threshold: f64) -> Option<f64> {
    estimates
        .iter()
        .filter(|e| e.lower_slope > threshold && !e.is_infinite())
        .map(|e| e.discrepancy().max(0.0))
        .reduce(f64::min)
}

pub fn discrepancy_summary(
    oracle: &dyn MassOracle,
    points: &[Point],
    levels: RangeInclusive<u32>,
    threshold: f64,
) -> Result<Option<f64>, SpectraError> {
    let estimates = points
        .par_iter()
        .map(|x| local_dim(oracle, x, levels.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(discrepancy_from_estimates(&estimates, threshold))
}
