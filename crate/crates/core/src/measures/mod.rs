//! Constructive probability measures.
//!
//! Each [`MeasureModel`] can be sampled deterministically from `(seed, index)`,
//! queried for ball and cell masses through a [`MassOracle`], and, for the
//! built-in analytic models, asked for its dimension profile.

mod cantor;
mod example;
mod oracle;
mod profile;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::Rng;
use smallvec::SmallVec;
use thiserror::Error;

use crate::geometry::{GeometryError, Point};
use crate::rng::{self, Domain};

pub use cantor::{cantor_function, dist_to_cantor, log3_2};
pub use example::{
    classify_point, fattened_cantor_mass, fattened_cantor_masses, isolation_level, ExampleMeasure, FattenedMass,
    PointClass,
};
pub use oracle::{
    ball_mass, EmpiricalOracle, ExactOracle, MassEstimate, MassMode, MassOracle, MassQuery,
    Reservoir, DEFAULT_RESERVOIR_SIZE,
};
pub(crate) use oracle::unit_ball_volume;
pub use profile::{analytic_profile, AnalyticProfile, ExampleConstants};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("exact mass is not available for {0}; use empirical mode")]
    UnsupportedMode(&'static str),
    #[error("no analytic profile for {0}")]
    NoAnalyticProfile(&'static str),
    #[error("operation requires a one-dimensional model")]
    NotOneDimensional,
    #[error("query dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Number of `+-lambda^n` terms kept so that the tail `lambda^(N+1)/(1-lambda)`
/// is below `2^-40`.
pub fn bernoulli_terms(lambda: f64) -> u32 {
    let target = 2f64.powi(-40);
    let mut n = 0u32;
    while lambda.powi(n as i32 + 1) / (1.0 - lambda) >= target {
        n += 1;
    }
    n
}

/// A Bernoulli-convolution draw rescaled from `[-1/(1-l), 1/(1-l)]` to `[0, 1]`.
pub(crate) fn bernoulli_unit(bits: u64, lambda: f64, terms: u32) -> f64 {
    let mut x = 0.0;
    let mut p = 1.0;
    for n in 0..=terms {
        let sign = if (bits >> n) & 1 == 1 { 1.0 } else { -1.0 };
        x += sign * p;
        p *= lambda;
    }
    (x * (1.0 - lambda) + 1.0) / 2.0
}

fn check_lambda(lambda: f64) -> Result<(), MeasureError> {
    if lambda > 0.0 && lambda < 1.0 / 3.0 {
        Ok(())
    } else {
        Err(MeasureError::InvalidParameter {
            field: "lambda",
            reason: format!("must lie in (0, 1/3), got {lambda}"),
        })
    }
}

/// A sampleable probability measure.
#[derive(Clone, Debug)]
pub enum MeasureModel {
    /// Lebesgue measure on `[0,1]^d`.
    UniformBox { dim: usize },
    /// Uniform (Cantor) measure on the ternary Cantor set.
    CantorUniform,
    /// Bernoulli convolution with parameter `lambda`, rescaled onto `[0, 1]`.
    BernoulliConvolution { lambda: f64, terms: u32 },
    /// Composite measure built from affine Bernoulli-convolution copies sitting
    /// in the middle ninths of the Cantor construction intervals.
    Example(ExampleMeasure),
    /// Uniform choice among a fixed list of atoms.
    Empirical(Arc<[Point]>),
}

impl MeasureModel {
    pub fn uniform_box(dim: usize) -> Result<Self, MeasureError> {
        if dim == 0 {
            return Err(MeasureError::InvalidParameter {
                field: "dim",
                reason: "must be at least 1".into(),
            });
        }
        Ok(MeasureModel::UniformBox { dim })
    }

    pub fn cantor() -> Self {
        MeasureModel::CantorUniform
    }

    pub fn bernoulli(lambda: f64) -> Result<Self, MeasureError> {
        check_lambda(lambda)?;
        Ok(MeasureModel::BernoulliConvolution { lambda, terms: bernoulli_terms(lambda) })
    }

    pub fn example(lambda: f64, beta: f64, k_max: u32) -> Result<Self, MeasureError> {
        Ok(MeasureModel::Example(ExampleMeasure::new(lambda, beta, k_max)?))
    }

    pub fn empirical(points: Vec<Point>) -> Result<Self, MeasureError> {
        let Some(first) = points.first() else {
            return Err(MeasureError::InvalidParameter {
                field: "points",
                reason: "empirical measure needs at least one atom".into(),
            });
        };
        let d = first.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != d) {
            return Err(MeasureError::DimensionMismatch { expected: d, got: p.dim() });
        }
        Ok(MeasureModel::Empirical(points.into()))
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureModel::UniformBox { dim } => *dim,
            MeasureModel::Empirical(pts) => pts[0].dim(),
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureModel::UniformBox { .. } => "UniformBox",
            MeasureModel::CantorUniform => "CantorUniform",
            MeasureModel::BernoulliConvolution { .. } => "BernoulliConvolution",
            MeasureModel::Example(_) => "ExampleMeasure",
            MeasureModel::Empirical(_) => "Empirical",
        }
    }

    /// Stable 64-bit fingerprint of the model parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.name().hash(&mut h);
        match self {
            MeasureModel::UniformBox { dim } => dim.hash(&mut h),
            MeasureModel::CantorUniform => {}
            MeasureModel::BernoulliConvolution { lambda, terms } => {
                lambda.to_bits().hash(&mut h);
                terms.hash(&mut h);
            }
            MeasureModel::Example(ex) => {
                ex.lambda().to_bits().hash(&mut h);
                ex.beta().to_bits().hash(&mut h);
                ex.k_max().hash(&mut h);
            }
            MeasureModel::Empirical(pts) => {
                pts.len().hash(&mut h);
                for p in pts.iter() {
                    for c in p.coords() {
                        c.to_bits().hash(&mut h);
                    }
                }
            }
        }
        h.finish()
    }

    /// Draw `index` of the i.i.d. sequence `omega` for `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> Point {
        self.sample_in(seed, Domain::Cover, index)
    }

    pub(crate) fn sample_in(&self, seed: u64, domain: Domain, index: u64) -> Point {
        let mut r = rng::stream(seed, domain, index);
        match self {
            MeasureModel::UniformBox { dim } => {
                let coords: SmallVec<[f64; 2]> = (0..*dim).map(|_| rng::unit_f64(&mut r)).collect();
                Point::from_vec_unchecked(coords)
            }
            MeasureModel::CantorUniform => {
                // 40 ternary digits from {0, 2}; 3^-40 is far below f64 spacing near 1
                let bits: u64 = r.gen();
                let mut x = 0.0;
                let mut scale = 2.0 / 3.0;
                for i in 0..40 {
                    x += ((bits >> i) & 1) as f64 * scale;
                    scale /= 3.0;
                }
                Point::scalar(x)
            }
            MeasureModel::BernoulliConvolution { lambda, terms } => {
                Point::scalar(bernoulli_unit(r.gen(), *lambda, *terms))
            }
            MeasureModel::Example(ex) => Point::scalar(ex.sample_with(&mut r).0),
            MeasureModel::Empirical(pts) => {
                let i = r.gen_range(0..pts.len());
                pts[i].clone()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let models = [
            MeasureModel::uniform_box(2).unwrap(),
            MeasureModel::cantor(),
            MeasureModel::bernoulli(0.2).unwrap(),
            MeasureModel::example(1.0 / 6.0, 1.3, 40).unwrap(),
        ];
        for m in &models {
            for i in 1..50 {
                assert_eq!(m.sample(42, i), m.sample(42, i));
            }
            assert_ne!(m.sample(42, 1), m.sample(42, 2));
        }
    }

    #[test]
    fn uniform_mean() {
        let m = MeasureModel::uniform_box(1).unwrap();
        let n = 1_000_000u64;
        let mean: f64 = (1..=n).map(|i| m.sample(3, i).x()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "{mean}");
    }

    #[test]
    fn bernoulli_truncation() {
        let n = bernoulli_terms(1.0 / 6.0);
        let l: f64 = 1.0 / 6.0;
        assert!(l.powi(n as i32 + 1) / (1.0 - l) < 2f64.powi(-40));
        assert!(l.powi(n as i32) / (1.0 - l) >= 2f64.powi(-40));
        // extreme draws land at the ends of [0,1]
        assert!(bernoulli_unit(0, l, n) < 1e-12);
        assert!(bernoulli_unit(u64::MAX, l, n) > 1.0 - 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MeasureModel::bernoulli(0.4).is_err());
        assert!(MeasureModel::example(1.0 / 6.0, 1.0, 10).is_err());
        assert!(MeasureModel::example(1.0 / 6.0, 1.3, 0).is_err());
        assert!(MeasureModel::empirical(vec![]).is_err());
        assert!(MeasureModel::uniform_box(0).is_err());
    }

    /// Consecutive indices land in level-6 cells independently: chi-square on
    /// the 64x64 joint occupancy table of `(omega_i, omega_{i+1})`.
    #[test]
    fn consecutive_draws_independent() {
        let m = MeasureModel::uniform_box(1).unwrap();
        let bins = 64usize;
        let n = 200_000u64;
        let mut table = vec![0u64; bins * bins];
        for i in 0..n {
            let a = (m.sample(11, 2 * i + 1).x() * bins as f64) as usize;
            let b = (m.sample(11, 2 * i + 2).x() * bins as f64) as usize;
            table[a * bins + b] += 1;
        }
        let expected = n as f64 / (bins * bins) as f64;
        let chi2: f64 = table.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // 4095 degrees of freedom: mean 4095, sd ~ 90.5; p = 0.001 at about +3.1 sd
        let dof = (bins * bins - 1) as f64;
        assert!(chi2 < dof + 3.1 * (2.0 * dof).sqrt(), "chi2 = {chi2}");
    }
}
