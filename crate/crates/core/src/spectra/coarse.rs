use rayon::prelude::*;

use super::curve::{Grid, SpectrumCurve};
use super::SpectraError;
use crate::geometry::ols;
use crate::measures::MassOracle;

/// Empirical counts need at least this many samples per occupied cube on
/// average before a level is considered resolved.
pub const MIN_MEAN_HITS: f64 = 4.0;

/// Relative slack on mass thresholds so that ties lost to rounding of the
/// grid abscissae still count as `mu(Q) >= r^s`.
const TIE_SLACK: f64 = 1e-12;

/// Cube counts `N_r(s) = #{Q in D_n : mu(Q) >= r^s}`, `r = 2^-n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseSpectrumReport {
    pub levels: Vec<u32>,
    pub s_grid: Grid,
    /// `counts[l][i]` is `N_r(s_i)` at `levels[l]`.
    pub counts: Vec<Vec<u64>>,
    /// Per level, the mass exponents `-log2 mu(Q) / n` of charged cubes, sorted.
    exponents: Vec<Vec<f64>>,
    /// Sample size behind the masses; `None` for exact oracles.
    pub samples: Option<u64>,
}

impl CoarseSpectrumReport {
    /// `N_r(s)` at `levels[l]` for an arbitrary `s`.
    pub fn count_at(&self, l: usize, s: f64) -> u64 {
        let e = &self.exponents[l];
        let cut = s + TIE_SLACK * s.abs().max(1.0);
        e.partition_point(|&x| x <= cut) as u64
    }

    /// Total number of charged cubes at `levels[l]`.
    pub fn occupied(&self, l: usize) -> u64 {
        self.exponents[l].len() as u64
    }

    pub fn to_csv(&self, meta: &[(String, String)]) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str("level,s,count\n");
        for (l, &n) in self.levels.iter().enumerate() {
            for (i, s) in self.s_grid.xs().enumerate() {
                let _ = writeln!(out, "{n},{s},{}", self.counts[l][i]);
            }
        }
        out
    }
}

pub fn coarse_counts(
    oracle: &dyn MassOracle,
    levels: &[u32],
    s_grid: Grid,
    budget: u64,
) -> Result<CoarseSpectrumReport, SpectraError> {
    let samples = oracle.samples();
    let exponents = levels
        .par_iter()
        .map(|&n| {
            let cells = oracle.charged_cells(n, budget)?;
            if let Some(total) = samples {
                if (total as f64) < MIN_MEAN_HITS * cells.len() as f64 {
                    return Err(SpectraError::Resolution { level: n, occupied: cells.len() as u64, samples: total });
                }
            }
            let mut e: Vec<f64> = cells
                .iter()
                .map(|(_, m)| if n == 0 { 0.0 } else { -m.log2() / n as f64 })
                .collect();
            e.sort_by(f64::total_cmp);
            Ok(e)
        })
        .collect::<Result<Vec<_>, SpectraError>>()?;
    let mut report = CoarseSpectrumReport {
        levels: levels.to_vec(),
        s_grid,
        counts: Vec::new(),
        exponents,
        samples,
    };
    report.counts = (0..levels.len())
        .map(|l| s_grid.xs().map(|s| report.count_at(l, s)).collect())
        .collect();
    Ok(report)
}

/// `G(s)` as the slope of `log2(N_r(s+eps) - N_r(s-eps))` against `n` over
/// the report's levels. Levels with a zero difference are skipped; a curve
/// value of 0 means every difference vanished, a sentinel means fewer than
/// three levels were usable.
pub fn coarse_spectrum(report: &CoarseSpectrumReport, eps: f64) -> Result<SpectrumCurve, SpectraError> {
    let step = report.s_grid.step;
    if eps < 2.0 * step * (1.0 - 1e-9) {
        return Err(SpectraError::EpsilonTooSmall { eps, step });
    }
    let values = report
        .s_grid
        .xs()
        .map(|s| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (l, &n) in report.levels.iter().enumerate() {
                let hi = report.count_at(l, s + eps);
                let lo = report.count_at(l, s - eps);
                if hi > lo {
                    xs.push(n as f64);
                    ys.push(((hi - lo) as f64).log2());
                }
            }
            match xs.len() {
                0 => 0.0,
                1 | 2 => f64::INFINITY,
                _ => ols(&xs, &ys).0,
            }
        })
        .collect();
    SpectrumCurve::new(report.s_grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{log3_2, EmpiricalOracle, ExactOracle, MeasureModel};

    #[test]
    fn uniform_exact_step() {
        let o = ExactOracle::new(&MeasureModel::uniform_box(1).unwrap()).unwrap();
        let grid = Grid::default_s();
        let r = coarse_counts(&o, &[6, 8, 10], grid, 1 << 20).unwrap();
        for (l, &n) in r.levels.iter().enumerate() {
            for (i, s) in grid.xs().enumerate() {
                let want = if i >= 200 { 1u64 << n } else { 0 };
                assert_eq!(r.counts[l][i], want, "n={n} s={s}");
            }
        }
        let g = coarse_spectrum(&r, 0.05).unwrap();
        let at = |s: f64| g.get(grid.nearest(s).unwrap());
        assert!((at(1.0) - 1.0).abs() < 1e-9);
        assert_eq!(at(0.5), 0.0);
        assert_eq!(at(1.3), 0.0);
    }

    #[test]
    fn uniform_brute_force_level_six() {
        let o = ExactOracle::new(&MeasureModel::uniform_box(1).unwrap()).unwrap();
        let grid = Grid::new(0.9, 0.05, 5).unwrap();
        let r = coarse_counts(&o, &[6], grid, 1 << 20).unwrap();
        for (i, s) in grid.xs().enumerate() {
            let brute = (0..64i64)
                .filter(|&k| o.cell_mass(6, &[k]).unwrap().mass >= 2f64.powf(-6.0 * s) * (1.0 - 1e-12))
                .count() as u64;
            assert_eq!(r.counts[0][i], brute);
        }
    }

    #[test]
    fn counts_monotone_and_saturate() {
        let o = ExactOracle::new(&MeasureModel::cantor()).unwrap();
        let r = coarse_counts(&o, &[8, 10, 12], Grid::default_s(), 1 << 20).unwrap();
        for (l, row) in r.counts.iter().enumerate() {
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(r.count_at(l, 1e6), r.occupied(l));
        }
    }

    /// Every level-n dyadic cube has Cantor mass below `2^(-n d1)`, so
    /// `N_r(d1)` vanishes; the occupied-cube count carries the growth rate.
    #[test]
    fn cantor_growth_rate() {
        let o = ExactOracle::new(&MeasureModel::cantor()).unwrap();
        let d1 = log3_2();
        let levels: Vec<u32> = (8..=16).collect();
        let r = coarse_counts(&o, &levels, Grid::default_s(), 1 << 20).unwrap();
        let occupied: Vec<(u32, u64)> = levels.iter().enumerate().map(|(l, &n)| (n, r.occupied(l))).collect();
        let est = crate::geometry::dim_from_counts(&occupied).unwrap();
        assert!((est.slope - d1).abs() < 0.05, "{est:?}");
        assert!((0..levels.len()).all(|l| r.count_at(l, d1) == 0));
    }

    #[test]
    fn zero_counts_give_zero_curve() {
        let r = CoarseSpectrumReport {
            levels: vec![4, 5, 6],
            s_grid: Grid::new(0.0, 0.01, 10).unwrap(),
            counts: vec![vec![0; 10]; 3],
            exponents: vec![vec![]; 3],
            samples: None,
        };
        let g = coarse_spectrum(&r, 0.02).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert!(coarse_spectrum(&r, 0.01).is_err());
    }

    #[test]
    fn empirical_resolution_error() {
        let model = MeasureModel::uniform_box(1).unwrap();
        let o = EmpiricalOracle::new(&model, 4, 10_000).unwrap();
        assert!(coarse_counts(&o, &[8], Grid::default_s(), 1 << 20).is_ok());
        assert!(matches!(
            coarse_counts(&o, &[14], Grid::default_s(), 1 << 20),
            Err(SpectraError::Resolution { .. })
        ));
    }
}
