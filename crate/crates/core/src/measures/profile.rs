//! Closed-form dimension profiles of the built-in measures.

use super::{MeasureError, MeasureModel};
use crate::spectra::StepSpectrum;

/// Constants of the Example measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleConstants {
    pub s0: f64,
    pub s1: f64,
    pub d1: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticProfile {
    /// Hausdorff spectrum: dimension of `{x : lower local dim <= s}`.
    pub f: StepSpectrum,
    /// Packing spectrum.
    pub h: StepSpectrum,
    pub udimh: f64,
    pub udimp: f64,
    pub example: Option<ExampleConstants>,
}

pub fn analytic_profile(model: &MeasureModel) -> Result<AnalyticProfile, MeasureError> {
    match model {
        MeasureModel::UniformBox { dim } => {
            let d = *dim as f64;
            let f = StepSpectrum::new(0.0, vec![(d, d)]);
            Ok(AnalyticProfile { h: f.clone(), f, udimh: d, udimp: d, example: None })
        }
        MeasureModel::CantorUniform => {
            let d1 = super::log3_2();
            let f = StepSpectrum::new(0.0, vec![(d1, d1)]);
            Ok(AnalyticProfile { h: f.clone(), f, udimh: d1, udimp: d1, example: None })
        }
        MeasureModel::Example(ex) => {
            let c = ExampleConstants { s0: ex.s0(), s1: ex.s1(), d1: ex.d1(), gamma: ex.gamma() };
            let f = StepSpectrum::new(0.0, vec![(c.s0, c.s0), (c.s1, c.d1)]);
            // C is mu-null, so both essential suprema only see the copies
            Ok(AnalyticProfile { h: f.clone(), f, udimh: c.s0, udimp: c.s0, example: Some(c) })
        }
        other => Err(MeasureError::NoAnalyticProfile(other.name())),
    }
}
