//! The composite measure `mu = sum_k p_k mu_k`, where `mu_k` spreads mass
//! `2^-k` over affine Bernoulli-convolution copies placed in the middle
//! ninths of the `2^k` intervals of `C_k`, and `p_k` is proportional to
//! `2^((1-beta)k)`.

use rand::Rng;
use rayon::prelude::*;

use super::cantor::{dist_to_cantor, ternary_position, TernaryPosition};
use super::oracle::MassEstimate;
use super::{bernoulli_terms, bernoulli_unit, check_lambda, MeasureError, MeasureModel};
use crate::geometry::Point;
use crate::rng::{self, Domain};

const MAX_COMPONENTS: u32 = 60;
const FATTEN_STREAM: u64 = 0xfa77;
/// Below this many samples a fattened-mass estimate carries a warning.
pub const MIN_FATTEN_SAMPLES: usize = 1000;

#[derive(Clone, Debug)]
pub struct ExampleMeasure {
    lambda: f64,
    beta: f64,
    k_max: u32,
    terms: u32,
    /// Cumulative component probabilities, `cum[k] = P(K <= k)`.
    cum: Vec<f64>,
}

impl ExampleMeasure {
    pub fn new(lambda: f64, beta: f64, k_max: u32) -> Result<Self, MeasureError> {
        check_lambda(lambda)?;
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(MeasureError::InvalidParameter {
                field: "beta",
                reason: format!("must be finite and > 1, got {beta}"),
            });
        }
        if !(1..=MAX_COMPONENTS).contains(&k_max) {
            return Err(MeasureError::InvalidParameter {
                field: "k_max",
                reason: format!("must lie in 1..={MAX_COMPONENTS}, got {k_max}"),
            });
        }
        let q = 2f64.powf(1.0 - beta);
        let weights: Vec<f64> = (0..=k_max).map(|k| q.powi(k as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cum: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        *cum.last_mut().unwrap() = 1.0;
        Ok(ExampleMeasure { lambda, beta, k_max, terms: bernoulli_terms(lambda), cum })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Local dimension at points of the Bernoulli copies.
    pub fn s0(&self) -> f64 {
        std::f64::consts::LN_2 / -self.lambda.ln()
    }

    /// Local dimension at points of `C`.
    pub fn s1(&self) -> f64 {
        self.beta * super::log3_2()
    }

    pub fn d1(&self) -> f64 {
        super::log3_2()
    }

    pub fn gamma(&self) -> f64 {
        self.s1() - self.d1()
    }

    /// Closed-form bounds `[2^{-(beta-1)} r^gamma, 2^{2(beta-1)} r^gamma]` on
    /// the mass of the closed `r`-fattening of the Cantor set, `r < 1/2`.
    pub fn fattening_bounds(&self, r: f64) -> (f64, f64) {
        let b = self.beta - 1.0;
        let rg = r.powf(self.gamma());
        (2f64.powf(-b) * rg, 2f64.powf(2.0 * b) * rg)
    }

    /// Renormalised probability of component `k`.
    pub fn component_prob(&self, k: u32) -> f64 {
        match k {
            0 => self.cum[0],
            k if k <= self.k_max => self.cum[k as usize] - self.cum[k as usize - 1],
            _ => 0.0,
        }
    }

    /// Draw a point together with the component it came from.
    pub fn sample_with<R: Rng>(&self, r: &mut R) -> (f64, u32) {
        let u = rng::unit_f64(r);
        let k = self.cum.partition_point(|&c| c <= u).min(self.k_max as usize) as u32;
        let digits: u64 = r.gen();
        let mut left = 0.0;
        let mut width = 1.0;
        for i in 0..k {
            width /= 3.0;
            if (digits >> i) & 1 == 1 {
                left += 2.0 * width;
            }
        }
        let v = bernoulli_unit(r.gen(), self.lambda, self.terms);
        (left + width * (4.0 + v) / 9.0, k)
    }
}

/// Coarsest level `m` at which every ball `B(x, 2^-m)` around a point `x` of
/// the component-`k` copy sees that copy alone: the copy sits in the middle
/// of an empty gap of width `3^-k / 3`, at distance `3^-k / 9` from its ends.
pub fn isolation_level(k: u32) -> u32 {
    (9.0 * 3f64.powi(k as i32)).log2().ceil() as u32
}

/// Location of a point relative to the Example measure's support.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointClass {
    /// Inside the middle-ninth interval carrying a copy of component `k`.
    Component(u32),
    /// In `C`, up to `f64` resolution.
    Cantor,
    Outside,
}

impl PointClass {
    /// Ground-truth local dimension of the Example measure at such a point.
    pub fn local_dim(self, ex: &ExampleMeasure) -> f64 {
        match self {
            PointClass::Component(_) => ex.s0(),
            PointClass::Cantor => ex.s1(),
            PointClass::Outside => f64::INFINITY,
        }
    }
}

/// Classify `x` by ternary descent. Components are resolved to their middle
/// ninth interval, the convex hull of the copy's support.
pub fn classify_point(ex: &ExampleMeasure, x: &Point) -> Result<PointClass, MeasureError> {
    if x.dim() != 1 {
        return Err(MeasureError::NotOneDimensional);
    }
    Ok(match ternary_position(x.x()) {
        TernaryPosition::MiddleNinth(k) if k <= ex.k_max => PointClass::Component(k),
        TernaryPosition::MiddleNinth(_) | TernaryPosition::Gap(_) | TernaryPosition::Outside => {
            PointClass::Outside
        }
        TernaryPosition::Cantor => PointClass::Cantor,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FattenedMass {
    pub r: f64,
    pub estimate: MassEstimate,
    pub warning: Option<String>,
}

/// Monte Carlo estimate of `mu(C_r)`, `C_r = {x : dist(x, C) <= r}`.
pub fn fattened_cantor_mass(
    ex: &ExampleMeasure,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<FattenedMass, MeasureError> {
    Ok(fattened_cantor_masses(ex, &[r], samples, seed)?.remove(0))
}

/// As [`fattened_cantor_mass`] for several radii sharing one sample set.
pub fn fattened_cantor_masses(
    ex: &ExampleMeasure,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<FattenedMass>, MeasureError> {
    if let Some(&r) = radii.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(MeasureError::InvalidParameter {
            field: "r",
            reason: format!("must lie in (0, 1), got {r}"),
        });
    }
    if samples == 0 {
        return Err(MeasureError::InvalidParameter {
            field: "samples",
            reason: "must be positive".into(),
        });
    }
    let model = MeasureModel::Example(ex.clone());
    let mut dists: Vec<f64> = (1..=samples as u64)
        .into_par_iter()
        .map(|i| dist_to_cantor(model.sample_in(seed, Domain::Aux(FATTEN_STREAM), i).x()))
        .collect();
    dists.sort_by(f64::total_cmp);
    let warning = (samples < MIN_FATTEN_SAMPLES)
        .then(|| format!("only {samples} samples; estimate is imprecise"));
    Ok(radii
        .iter()
        .map(|&r| {
            let hits = dists.partition_point(|&d| d <= r);
            FattenedMass {
                r,
                estimate: MassEstimate::from_hits(hits as u64, samples as u64),
                warning: warning.clone(),
            }
        })
        .collect())
}
