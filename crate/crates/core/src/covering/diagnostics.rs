use std::collections::HashSet;

use rayon::prelude::*;

use super::{CoverSequence, CoveringError};
use crate::geometry::{cell_of, Ball, CellIndex, Point};
use crate::measures::MassOracle;

/// `#{n <= up_to : |x - omega_n| <= r_n}`.
pub fn coverage_count(x: &Point, cover: &CoverSequence, up_to: u64) -> Result<u64, CoveringError> {
    if up_to > cover.n_max() {
        return Err(CoveringError::BeyondCover { needed: up_to, n_max: cover.n_max() });
    }
    Ok((1..=up_to)
        .into_par_iter()
        .filter(|&n| cover.ball(n).contains(x))
        .count() as u64)
}

/// Cumulative event counts `N_n` and cumulative probabilities `M_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationSeries {
    pub hits: Vec<u64>,
    pub expected: Vec<f64>,
}

impl DeviationSeries {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// `N_n / M_n` at `n` (1-based).
    pub fn ratio(&self, n: usize) -> f64 {
        self.hits[n - 1] as f64 / self.expected[n - 1]
    }
}

/// Track the events `A_k = {event(k, B(omega_k, r_k))}` with `P(A_k) = prob(k)`
/// for `k = 1..=up_to`.
pub fn deviation_stats<E, P>(
    cover: &CoverSequence,
    up_to: u64,
    event: E,
    prob: P,
) -> Result<DeviationSeries, CoveringError>
where
    E: Fn(u64, &Ball) -> bool + Sync,
    P: Fn(u64) -> f64,
{
    if up_to > cover.n_max() {
        return Err(CoveringError::BeyondCover { needed: up_to, n_max: cover.n_max() });
    }
    let mut expected = Vec::with_capacity(up_to as usize);
    let mut m = 0.0;
    for k in 1..=up_to {
        let p = prob(k);
        if !(p > 0.0 && p <= 1.0) {
            return Err(CoveringError::InvalidProbability { k, p });
        }
        m += p;
        expected.push(m);
    }
    let flags: Vec<bool> = (1..=up_to).into_par_iter().map(|k| event(k, &cover.ball(k))).collect();
    let mut n = 0u64;
    let hits = flags
        .into_iter()
        .map(|f| {
            n += f as u64;
            n
        })
        .collect();
    Ok(DeviationSeries { hits, expected })
}

/// `K(n) = {k : 2^{n/alpha} <= k < 2^{(n+1)/alpha}}` as a half-open range.
pub fn annulus_indices(n: u32, alpha: f64) -> (u64, u64) {
    let lo = (n as f64 / alpha).exp2().ceil();
    let hi = ((n + 1) as f64 / alpha).exp2().ceil();
    (lo.min(u64::MAX as f64) as u64, hi.min(u64::MAX as f64) as u64)
}

/// Number of level-`n` dyadic cubes `D` containing some `omega_k`,
/// `k in K(n)`, with `2^{-(s+eps)n} <= mu(D) <= 2^{-(s-eps)n}`.
pub fn annulus_cube_count(
    cover: &CoverSequence,
    oracle: &dyn MassOracle,
    n: u32,
    s: f64,
    eps: f64,
    alpha: f64,
) -> Result<u64, CoveringError> {
    if !(eps > 0.0) {
        return Err(CoveringError::InvalidConfig { field: "eps", reason: format!("must be positive, got {eps}") });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CoveringError::InvalidConfig { field: "alpha", reason: format!("must be positive, got {alpha}") });
    }
    let (lo, hi) = annulus_indices(n, alpha);
    if lo >= hi {
        return Ok(0);
    }
    if hi - 1 > cover.n_max() {
        return Err(CoveringError::BeyondCover { needed: hi - 1, n_max: cover.n_max() });
    }
    let cells: HashSet<CellIndex> = (lo..hi).into_par_iter().map(|k| cell_of(&cover.center(k), n)).collect();
    let (low, high) = ((-(s + eps) * n as f64).exp2(), (-(s - eps) * n as f64).exp2());
    let mut count = 0;
    for c in &cells {
        let m = oracle.cell_mass(n, c)?.mass;
        if low <= m && m <= high {
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{generate_cover, CoverConfig, Schedule};
    use crate::measures::{ExactOracle, MeasureModel};

    fn cover(model: MeasureModel, alpha: f64, n_max: u64, seed: u64) -> CoverSequence {
        generate_cover(CoverConfig { model, schedule: Schedule::Power(alpha), n_max, seed }).unwrap()
    }

    #[test]
    fn coverage_examples() {
        let fixed = cover(MeasureModel::empirical(vec![Point::scalar(0.3)]).unwrap(), 2.0, 500, 0);
        assert_eq!(coverage_count(&Point::scalar(0.3), &fixed, 500).unwrap(), 500);
        let uni = cover(MeasureModel::uniform_box(1).unwrap(), 2.0, 500, 0);
        assert_eq!(coverage_count(&Point::scalar(5.0), &uni, 500).unwrap(), 0);
        assert!(coverage_count(&Point::scalar(0.3), &uni, 501).is_err());
    }

    #[test]
    fn coverage_matches_expectation() {
        let n = 10_000u64;
        let c = cover(MeasureModel::uniform_box(1).unwrap(), 0.5, n, 7);
        // P(|0.5 - omega| <= r) = min(1, 2r) for omega uniform on [0,1]
        let m: f64 = (1..=n).map(|k| (2.0 * (k as f64).powf(-0.5)).min(1.0)).sum();
        let got = coverage_count(&Point::scalar(0.5), &c, n).unwrap() as f64;
        assert!((got - m).abs() <= 3.0 * m.sqrt(), "{got} vs {m}");
    }

    #[test]
    fn deviation_examples() {
        let c = cover(MeasureModel::uniform_box(1).unwrap(), 1.0, 1000, 1);
        let half = deviation_stats(&c, 4, |_, b| b.center().x() < 0.5, |_| 0.5).unwrap();
        assert_eq!(half.expected[3], 2.0);
        let sure = deviation_stats(&c, 1000, |_, _| true, |_| 1.0).unwrap();
        assert_eq!(sure.hits[999], 1000);
        assert_eq!(sure.expected[999], 1000.0);
        assert!(deviation_stats(&c, 10, |_, _| true, |_| 0.0).is_err());
        assert!(sure.hits.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn annulus_indices_examples() {
        assert_eq!(annulus_indices(10, 1.0), (1024, 2048));
        assert_eq!(annulus_indices(20, 2.0), (1024, 1449));
        let (lo, hi) = annulus_indices(1, 4.0);
        assert!(lo >= hi);
    }

    #[test]
    fn annulus_counts() {
        let model = MeasureModel::uniform_box(1).unwrap();
        let oracle = ExactOracle::new(&model).unwrap();
        let c = cover(model, 2.0, 1 << 12, 5);
        let n = 20;
        let (lo, hi) = annulus_indices(n, 2.0);
        let brute: HashSet<CellIndex> = (lo..hi).map(|k| cell_of(&c.center(k), n)).collect();
        assert_eq!(annulus_cube_count(&c, &oracle, n, 1.0, 0.5, 2.0).unwrap(), brute.len() as u64);
        assert_eq!(annulus_cube_count(&c, &oracle, n, 10.0, 0.1, 2.0).unwrap(), 0);
        assert_eq!(annulus_cube_count(&c, &oracle, 1, 1.0, 0.5, 4.0).unwrap(), 0);
        assert!(annulus_cube_count(&c, &oracle, 30, 1.0, 0.5, 2.0).is_err());
        let rate = (brute.len() as f64).log2() / n as f64;
        assert!((rate - 0.5).abs() < 0.1, "{rate}");
    }
}
