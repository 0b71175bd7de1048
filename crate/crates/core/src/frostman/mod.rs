//! Constructive lower bounds: separated selections from the cover sequence,
//! fractal trees grown from them, and the energy integrals of the tree
//! measure.

mod certify;
mod energy;
mod select;
mod tree;

use thiserror::Error;

use crate::geometry::{Ball, GeometryError};
use crate::measures::MeasureError;

pub use certify::{certify_lower_bound, tree_energy, Certificate, EnergyReport, Verdict, CAUCHY_RATIO};
pub use energy::{check_restriction_bound, discrete_energy, min_uniform_constant, RestrictionOutcome};
pub use select::greedy_select;
pub use tree::{grow_tree, ChildFloor, FractalTree, MassSource, TreeConfig, TreeNode, DEFAULT_N0, DEFAULT_NODE_BUDGET};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrostmanError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(
        "growth failure at node {node} (generation {generation}): best selection {best} < floor {floor} up to n = {n_tried}"
    )]
    GrowthFailure { node: usize, generation: u32, n_tried: u64, best: usize, floor: usize },
    #[error("invalid tree at node {node}: {reason}")]
    InvalidTree { node: usize, reason: String },
    #[error("tree text line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> FrostmanError {
    FrostmanError::InvalidParameter { field, reason: reason.into() }
}

/// Parameters of one separated selection.
///
/// `mu` is assumed `(c, s)`-uniform: `mu(B(x, r)) <= c r^s` for all balls.
/// `u` bounds the upper local dimension from above.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionParams {
    pub s: f64,
    pub eps: f64,
    pub c: f64,
    pub u: f64,
    pub ball: Ball,
    pub n0: u64,
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), FrostmanError> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(invalid("s", format!("must be positive, got {}", self.s)));
        }
        if !(self.eps > 0.0 && self.eps < self.s) {
            return Err(invalid("eps", format!("must lie in (0, s = {}), got {}", self.s, self.eps)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", format!("must be positive, got {}", self.c)));
        }
        if !self.u.is_finite() {
            return Err(invalid("u", "must be finite"));
        }
        Ok(())
    }

    /// `W = 4^s max(c e, s / eps, 2)`.
    pub fn w(&self) -> f64 {
        selection_w(self.c, self.s, self.eps)
    }

    /// Guaranteed selection size `mu(B) n / (2W)`.
    pub fn min_count(&self, mass_b: f64, n: u64) -> f64 {
        mass_b * n as f64 / (2.0 * self.w())
    }

    /// `2 W^2 / mu(B)`.
    pub fn c_b(&self, mass_b: f64) -> f64 {
        2.0 * self.w().powi(2) / mass_b
    }
}

pub(crate) fn selection_w(c: f64, s: f64, eps: f64) -> f64 {
    4f64.powf(s) * (c * std::f64::consts::E).max(s / eps).max(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn params(c: f64, s: f64, eps: f64) -> SelectionParams {
        SelectionParams { s, eps, c, u: 1.0, ball: Ball::new(Point::scalar(0.5), 0.5).unwrap(), n0: 64 }
    }

    #[test]
    fn w_examples() {
        // 4 * max(2e, 10, 2) = 40
        assert!((params(2.0, 1.0, 0.1).w() - 40.0).abs() < 1e-12);
        // 4 * max(10e, 2, 2) = 40e
        assert!((params(10.0, 1.0, 0.5).w() - 40.0 * std::f64::consts::E).abs() < 1e-12);
        let mut p = params(2.0, 1.0, 0.1);
        p.eps = 0.25;
        assert!((p.w() - 8.0 * std::f64::consts::E).abs() < 1e-12);
        assert!((p.c_b(0.5) - 4.0 * p.w().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn validation() {
        assert!(params(2.0, 1.0, 0.1).validate().is_ok());
        assert!(params(2.0, 1.0, 1.0).validate().is_err());
        assert!(params(0.0, 1.0, 0.1).validate().is_err());
        assert!(params(2.0, -1.0, 0.1).validate().is_err());
    }
}
