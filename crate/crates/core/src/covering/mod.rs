//! Random covers `{B(omega_n, r_n)}`, finite-window surrogates of their limsup
//! set, and counting diagnostics.

mod diagnostics;
mod windows;

use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{Ball, GeometryError, Point};
use crate::measures::{MeasureError, MeasureModel};

pub use diagnostics::{annulus_cube_count, annulus_indices, coverage_count, deviation_stats, DeviationSeries};
pub use windows::{
    estimate_dim_limsup, limsup_approx, window_table_csv, LimsupApprox, LimsupEstimate, Window,
    WindowFamily, WindowRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoveringError {
    #[error("invalid cover config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("need at least {need} windows, got {got}")]
    TooFewWindows { got: usize, need: usize },
    #[error("window ends at index {needed} beyond N_max = {n_max}")]
    BeyondCover { needed: u64, n_max: u64 },
    #[error("degenerate estimate: window j = {j} leaves an empty set")]
    Degenerate { j: u32 },
    #[error("probability {p} at index {k} outside (0, 1]")]
    InvalidProbability { k: u64, p: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> CoveringError {
    CoveringError::InvalidConfig { field, reason: reason.into() }
}

/// Radius schedule `n -> r_n`, indices starting at 1.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// `r_n = n^-alpha`.
    Power(f64),
    /// `r_n = (2n)^-alpha / 2`.
    HalfPower(f64),
    /// `r_n` read from a list, `list[n - 1]`.
    Explicit(Arc<[f64]>),
}

impl Schedule {
    pub fn radius(&self, n: u64) -> f64 {
        match self {
            Schedule::Power(a) => (n as f64).powf(-a),
            Schedule::HalfPower(a) => (2.0 * n as f64).powf(-a) / 2.0,
            Schedule::Explicit(r) => r[(n - 1) as usize],
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            Schedule::Power(a) | Schedule::HalfPower(a) => Some(*a),
            Schedule::Explicit(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoverConfig {
    pub model: MeasureModel,
    pub schedule: Schedule,
    pub n_max: u64,
    pub seed: u64,
}

impl CoverConfig {
    pub fn validate(&self) -> Result<(), CoveringError> {
        if self.n_max < 2 {
            return Err(invalid("n_max", format!("must be at least 2, got {}", self.n_max)));
        }
        match &self.schedule {
            Schedule::Power(a) | Schedule::HalfPower(a) => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(invalid("alpha", format!("must be positive and finite, got {a}")));
                }
            }
            Schedule::Explicit(r) => {
                if (r.len() as u64) < self.n_max {
                    return Err(invalid("radii", format!("{} radii for N_max = {}", r.len(), self.n_max)));
                }
                if let Some(x) = r.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                    return Err(invalid("radii", format!("radius {x} is not positive")));
                }
                if r.windows(2).any(|w| w[1] > w[0]) {
                    return Err(invalid("radii", "must be nonincreasing"));
                }
            }
        }
        Ok(())
    }
}

/// One realisation of the covering process, evaluated lazily by index.
#[derive(Clone, Debug)]
pub struct CoverSequence {
    config: CoverConfig,
}

pub fn generate_cover(config: CoverConfig) -> Result<CoverSequence, CoveringError> {
    config.validate()?;
    Ok(CoverSequence { config })
}

impl CoverSequence {
    pub fn config(&self) -> &CoverConfig {
        &self.config
    }

    pub fn n_max(&self) -> u64 {
        self.config.n_max
    }

    pub fn center(&self, n: u64) -> Point {
        self.config.model.sample(self.config.seed, n)
    }

    pub fn radius(&self, n: u64) -> f64 {
        self.config.schedule.radius(n)
    }

    pub fn ball(&self, n: u64) -> Ball {
        Ball::new(self.center(n), self.radius(n)).expect("validated schedule gives positive radii")
    }
}
