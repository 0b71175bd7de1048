//! Local dimensions, coarse multifractal spectra, hull and tilde transforms,
//! and the bound curves for the covering dimension.

mod bounds;
mod coarse;
mod curve;
mod local;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::measures::MeasureError;

pub use bounds::{bound_curves, lower_bound_at, BoundCurves};
pub use coarse::{coarse_counts, coarse_spectrum, CoarseSpectrumReport, MIN_MEAN_HITS};
pub use curve::{is_sentinel, Grid, SpectrumCurve, StepSpectrum};
pub use local::{
    deepest_resolved_level, discrepancy_from_estimates, discrepancy_summary, local_dim, resolved_local_dim,
    LocalDimEstimate, LOCAL_WINDOW,
};

/// Default coarse-spectrum band half-width.
pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid is not uniform at row {index} (s = {x})")]
    NonUniformGrid { index: usize, x: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("need at least {need} levels, got {got}")]
    TooFewLevels { got: usize, need: usize },
    #[error("band half-width {eps} is below twice the grid step {step}")]
    EpsilonTooSmall { eps: f64, step: f64 },
    #[error("level {level} unresolved: {occupied} occupied cubes for {samples} samples")]
    Resolution { level: u32, occupied: u64, samples: u64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
