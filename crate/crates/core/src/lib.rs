//! Random covering sets driven by constructive measures.
//!
//! The crate simulates limsup sets of random balls `B(omega_n, r_n)` with
//! centres drawn from a [`measures::MeasureModel`], estimates their box
//! dimension, evaluates multifractal bound curves for the almost-sure
//! Hausdorff dimension, and builds fractal trees whose energy integrals
//! certify dimension lower bounds.

pub mod covering;
pub mod frostman;
pub mod geometry;
pub mod measures;
pub mod rng;
pub mod spectra;
