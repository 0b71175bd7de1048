use std::fmt::Write as _;

use super::curve::{is_sentinel, SpectrumCurve};
use crate::measures::AnalyticProfile;

/// Lower and upper bounds for `f(alpha)` as functions of `x = 1/alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurves {
    pub lower: SpectrumCurve,
    pub upper_main: SpectrumCurve,
    pub upper_alt: SpectrumCurve,
}

impl BoundCurves {
    pub fn to_csv(&self, meta: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str("x,lower,upper_main,upper_alt\n");
        for i in 0..self.lower.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.lower.x(i),
                self.lower.get(i),
                self.upper_main.get(i),
                self.upper_alt.get(i)
            );
        }
        out
    }
}

/// Pointwise lower bound at `x = 1/alpha` given a discrepancy `delta`.
///
/// Since `f` is nondecreasing in `x` and the discrepancy only shrinks as the
/// threshold drops, the bound `y - delta` for `y < udimh` carries over to
/// every `x >= y`; the supremum is `min(x, udimh) - delta`. For the Example
/// measure the bound `x - gamma` holds for `x <= s1`.
pub fn lower_bound_at(profile: &AnalyticProfile, x: f64, delta: f64) -> f64 {
    let mut v = profile.f.left_limit(x).max(x.min(profile.udimh) - delta);
    if let Some(c) = profile.example {
        v = v.max(x.min(c.s1) - c.gamma);
    }
    v
}

/// Bound curves on the grid of `g`, an estimate of the coarse spectrum.
/// Sentinel values of `g` are ignored.
pub fn bound_curves(profile: &AnalyticProfile, g: &SpectrumCurve, delta: f64) -> BoundCurves {
    let grid = g.grid();
    let g_tilde = g.tilde_transform();
    let lower = SpectrumCurve::from_fn(grid, |x| lower_bound_at(profile, x, delta));
    let upper_main = SpectrumCurve::new(
        grid,
        (0..grid.count)
            .map(|i| {
                let f = profile.f.eval(grid.x(i));
                let t = g_tilde.get(i);
                if is_sentinel(t) { f } else { f.max(t) }
            })
            .collect(),
    )
    .expect("grid-sized and NaN-free");
    let upper_alt = SpectrumCurve::from_fn(grid, |x| profile.h.hull_at(x));
    BoundCurves { lower, upper_main, upper_alt }
}
