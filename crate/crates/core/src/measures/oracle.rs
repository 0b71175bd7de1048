//! Ball and cell mass oracles.
//!
//! [`ExactOracle`] evaluates closed forms where they exist. [`EmpiricalOracle`]
//! answers from a reservoir of model samples, returning the hit fraction with
//! its binomial standard error. Reservoirs are built once per
//! `(model, seed, size)` and shared.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use super::cantor::cantor_function;
use super::{MeasureError, MeasureModel};
use crate::geometry::{cell_of, exp2i, CellIndex, DyadicGrid, Point};
use crate::rng::Domain;

pub const DEFAULT_RESERVOIR_SIZE: usize = 1_000_000;

/// A mass value with its uncertainty. Exact answers have `samples == None`
/// and zero error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassEstimate {
    pub mass: f64,
    pub std_err: f64,
    pub samples: Option<u64>,
}

impl MassEstimate {
    pub fn exact(mass: f64) -> Self {
        MassEstimate { mass, std_err: 0.0, samples: None }
    }

    pub fn from_hits(hits: u64, samples: u64) -> Self {
        let p = hits as f64 / samples as f64;
        MassEstimate {
            mass: p,
            std_err: (p * (1.0 - p) / samples as f64).sqrt(),
            samples: Some(samples),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.samples.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassMode {
    Exact,
    Empirical { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassQuery {
    pub center: Point,
    pub radius: f64,
    pub mode: MassMode,
}

impl MassQuery {
    pub fn new(center: Point, radius: f64, mode: MassMode) -> Result<Self, MeasureError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(MeasureError::InvalidParameter {
                field: "radius",
                reason: format!("must be positive and finite, got {radius}"),
            });
        }
        Ok(MassQuery { center, radius, mode })
    }
}

pub trait MassOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Mass of the closed ball `B(center, radius)`.
    fn ball_mass(&self, center: &Point, radius: f64) -> Result<MassEstimate, MeasureError>;

    /// Mass of a half-open dyadic cell.
    fn cell_mass(&self, level: u32, idx: &[i64]) -> Result<MassEstimate, MeasureError>;

    /// Every cell of positive mass at `level` with its mass. Fails when more
    /// than `budget` cells would have to be examined.
    fn charged_cells(&self, level: u32, budget: u64) -> Result<Vec<(CellIndex, f64)>, MeasureError>;

    /// Sample size behind the answers; `None` for exact oracles.
    fn samples(&self) -> Option<u64>;
}

/// Closed-form masses for `UniformBox` and `CantorUniform`.
#[derive(Clone, Debug)]
pub struct ExactOracle {
    model: MeasureModel,
}

impl ExactOracle {
    pub fn new(model: &MeasureModel) -> Result<Self, MeasureError> {
        match model {
            MeasureModel::UniformBox { .. } | MeasureModel::CantorUniform => {
                Ok(ExactOracle { model: model.clone() })
            }
            other => Err(MeasureError::UnsupportedMode(other.name())),
        }
    }

    fn check_dim(&self, d: usize) -> Result<(), MeasureError> {
        let expected = self.model.dim();
        if d == expected {
            Ok(())
        } else {
            Err(MeasureError::DimensionMismatch { expected, got: d })
        }
    }
}

fn overlap(lo: f64, hi: f64) -> f64 {
    (hi.min(1.0) - lo.max(0.0)).max(0.0)
}

/// Volume of the unit ball in `R^d`.
pub(crate) fn unit_ball_volume(d: usize) -> f64 {
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

impl MassOracle for ExactOracle {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn ball_mass(&self, center: &Point, radius: f64) -> Result<MassEstimate, MeasureError> {
        self.check_dim(center.dim())?;
        match &self.model {
            MeasureModel::UniformBox { dim: 1 } => {
                Ok(MassEstimate::exact(overlap(center.x() - radius, center.x() + radius)))
            }
            MeasureModel::UniformBox { dim } => {
                let inside = center.coords().iter().all(|&c| c - radius >= 0.0 && c + radius <= 1.0);
                if inside {
                    Ok(MassEstimate::exact(unit_ball_volume(*dim) * radius.powi(*dim as i32)))
                } else {
                    Err(MeasureError::UnsupportedMode("UniformBox balls crossing the cube boundary"))
                }
            }
            MeasureModel::CantorUniform => {
                let x = center.x();
                Ok(MassEstimate::exact(cantor_function(x + radius) - cantor_function(x - radius)))
            }
            _ => unreachable!("constructor admits only exact models"),
        }
    }

    fn cell_mass(&self, level: u32, idx: &[i64]) -> Result<MassEstimate, MeasureError> {
        self.check_dim(idx.len())?;
        let grid = DyadicGrid::new(idx.len(), level)?;
        let (lo, h) = grid.cell_bounds(idx);
        let mass = match &self.model {
            MeasureModel::UniformBox { .. } => lo.iter().map(|&a| overlap(a, a + h)).product(),
            MeasureModel::CantorUniform => cantor_function(lo[0] + h) - cantor_function(lo[0]),
            _ => unreachable!("constructor admits only exact models"),
        };
        Ok(MassEstimate::exact(mass))
    }

    fn charged_cells(&self, level: u32, budget: u64) -> Result<Vec<(CellIndex, f64)>, MeasureError> {
        let d = self.dim();
        let per_axis = 1u64.checked_shl(level).filter(|&n| n <= budget);
        let total = per_axis.and_then(|n| n.checked_pow(d as u32)).filter(|&n| n <= budget);
        let Some(total) = total else {
            return Err(crate::geometry::GeometryError::CellBudgetExceeded {
                level,
                needed: u64::MAX,
                budget,
            }
            .into());
        };
        let side = 1i64 << level;
        let cells: Vec<(CellIndex, f64)> = (0..total)
            .into_par_iter()
            .filter_map(|flat| {
                let mut rest = flat as i64;
                let idx: CellIndex = (0..d)
                    .map(|_| {
                        let k = rest % side;
                        rest /= side;
                        k
                    })
                    .collect();
                let m = self.cell_mass(level, &idx).ok()?.mass;
                (m > 0.0).then_some((idx, m))
            })
            .collect();
        Ok(cells)
    }

    fn samples(&self) -> Option<u64> {
        None
    }
}

/// Read-only sample of a model. One-dimensional reservoirs are kept sorted.
#[derive(Debug)]
pub struct Reservoir {
    dim: usize,
    coords: Vec<f64>,
}

type ReservoirKey = (u64, u64, usize);

fn cache() -> &'static Mutex<HashMap<ReservoirKey, Arc<Reservoir>>> {
    static CACHE: OnceLock<Mutex<HashMap<ReservoirKey, Arc<Reservoir>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl Reservoir {
    pub fn build(model: &MeasureModel, seed: u64, size: usize) -> Result<Self, MeasureError> {
        if size == 0 {
            return Err(MeasureError::InvalidParameter {
                field: "samples",
                reason: "reservoir size must be positive".into(),
            });
        }
        let dim = model.dim();
        let points: Vec<Point> = (1..=size as u64)
            .into_par_iter()
            .map(|i| model.sample_in(seed, Domain::Reservoir, i))
            .collect();
        let mut coords: Vec<f64> = Vec::with_capacity(size * dim);
        for p in &points {
            coords.extend_from_slice(p.coords());
        }
        if dim == 1 {
            coords.par_sort_unstable_by(f64::total_cmp);
        }
        Ok(Reservoir { dim, coords })
    }

    /// Shared reservoir for `(model, seed, size)`, built on first use.
    pub fn cached(model: &MeasureModel, seed: u64, size: usize) -> Result<Arc<Self>, MeasureError> {
        let key = (model.fingerprint(), seed, size);
        if let Some(r) = cache().lock().unwrap().get(&key) {
            return Ok(Arc::clone(r));
        }
        let built = Arc::new(Reservoir::build(model, seed, size)?);
        let mut guard = cache().lock().unwrap();
        Ok(Arc::clone(guard.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Number of samples in `[lo, hi]` (one-dimensional reservoirs).
    fn count_closed(&self, lo: f64, hi: f64) -> usize {
        let a = self.coords.partition_point(|&x| x < lo);
        let b = self.coords.partition_point(|&x| x <= hi);
        b.saturating_sub(a)
    }

    fn count_half_open(&self, lo: f64, hi: f64) -> usize {
        let a = self.coords.partition_point(|&x| x < lo);
        let b = self.coords.partition_point(|&x| x < hi);
        b.saturating_sub(a)
    }

    fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

#[derive(Clone, Debug)]
pub struct EmpiricalOracle {
    reservoir: Arc<Reservoir>,
}

impl EmpiricalOracle {
    pub fn new(model: &MeasureModel, seed: u64, size: usize) -> Result<Self, MeasureError> {
        Ok(EmpiricalOracle { reservoir: Reservoir::cached(model, seed, size)? })
    }

    pub fn from_reservoir(reservoir: Arc<Reservoir>) -> Self {
        EmpiricalOracle { reservoir }
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    fn estimate(&self, hits: usize) -> MassEstimate {
        MassEstimate::from_hits(hits as u64, self.reservoir.len() as u64)
    }

    fn check_dim(&self, d: usize) -> Result<(), MeasureError> {
        let expected = self.reservoir.dim;
        if d == expected {
            Ok(())
        } else {
            Err(MeasureError::DimensionMismatch { expected, got: d })
        }
    }
}

impl MassOracle for EmpiricalOracle {
    fn dim(&self) -> usize {
        self.reservoir.dim
    }

    fn ball_mass(&self, center: &Point, radius: f64) -> Result<MassEstimate, MeasureError> {
        self.check_dim(center.dim())?;
        let r = &self.reservoir;
        let hits = if r.dim == 1 {
            r.count_closed(center.x() - radius, center.x() + radius)
        } else {
            let r2 = radius * radius;
            r.points()
                .filter(|p| p.iter().zip(center.coords()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2)
                .count()
        };
        Ok(self.estimate(hits))
    }

    fn cell_mass(&self, level: u32, idx: &[i64]) -> Result<MassEstimate, MeasureError> {
        self.check_dim(idx.len())?;
        let r = &self.reservoir;
        let hits = if r.dim == 1 {
            let h = exp2i(-(level as i32));
            r.count_half_open(idx[0] as f64 * h, (idx[0] + 1) as f64 * h)
        } else {
            r.points()
                .filter(|p| cell_of(&Point::new(p).expect("reservoir points are finite"), level).as_slice() == idx)
                .count()
        };
        Ok(self.estimate(hits))
    }

    fn charged_cells(&self, level: u32, budget: u64) -> Result<Vec<(CellIndex, f64)>, MeasureError> {
        crate::geometry::DyadicGrid::new(self.dim(), level)?;
        let mut counts: HashMap<CellIndex, u64> = HashMap::new();
        for p in self.reservoir.points() {
            let idx = cell_of(&Point::new(p).expect("reservoir points are finite"), level);
            *counts.entry(idx).or_insert(0) += 1;
        }
        if counts.len() as u64 > budget {
            return Err(crate::geometry::GeometryError::CellBudgetExceeded {
                level,
                needed: counts.len() as u64,
                budget,
            }
            .into());
        }
        let n = self.reservoir.len() as f64;
        let mut cells: Vec<(CellIndex, f64)> =
            counts.into_iter().map(|(idx, c)| (idx, c as f64 / n)).collect();
        cells.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(cells)
    }

    fn samples(&self) -> Option<u64> {
        Some(self.reservoir.len() as u64)
    }
}

/// Mass of the ball described by `q`.
pub fn ball_mass(model: &MeasureModel, q: &MassQuery) -> Result<MassEstimate, MeasureError> {
    match q.mode {
        MassMode::Exact => ExactOracle::new(model)?.ball_mass(&q.center, q.radius),
        MassMode::Empirical { samples, seed } => {
            EmpiricalOracle::new(model, seed, samples)?.ball_mass(&q.center, q.radius)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn exact_examples() {
        let cantor = MeasureModel::cantor();
        let q = MassQuery::new(Point::scalar(1.0 / 6.0), 1.0 / 6.0, MassMode::Exact).unwrap();
        assert_eq!(ball_mass(&cantor, &q).unwrap().mass, 0.5);
        let uni = MeasureModel::uniform_box(1).unwrap();
        let q = MassQuery::new(Point::scalar(0.5), 0.1, MassMode::Exact).unwrap();
        assert!((ball_mass(&uni, &q).unwrap().mass - 0.2).abs() < 1e-15);
        let q = MassQuery::new(Point::scalar(0.0), 0.1, MassMode::Exact).unwrap();
        assert!((ball_mass(&uni, &q).unwrap().mass - 0.1).abs() < 1e-15);
        assert!(MassQuery::new(Point::scalar(0.5), 0.0, MassMode::Exact).is_err());
    }

    #[test]
    fn exact_unsupported() {
        let q = MassQuery::new(Point::scalar(0.5), 0.1, MassMode::Exact).unwrap();
        for m in [MeasureModel::bernoulli(0.2).unwrap(), MeasureModel::example(0.2, 1.3, 10).unwrap()] {
            assert!(matches!(ball_mass(&m, &q), Err(MeasureError::UnsupportedMode(_))));
        }
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        let o = ExactOracle::new(&MeasureModel::uniform_box(2).unwrap()).unwrap();
        let m = o.ball_mass(&Point::new(&[0.5, 0.5]).unwrap(), 0.1).unwrap().mass;
        assert!((m - std::f64::consts::PI * 0.01).abs() < 1e-15);
        assert!(o.ball_mass(&Point::new(&[0.05, 0.5]).unwrap(), 0.1).is_err());
    }

    #[test]
    fn cantor_exact_matches_empirical() {
        let model = MeasureModel::cantor();
        let exact = ExactOracle::new(&model).unwrap();
        let emp = EmpiricalOracle::new(&model, 17, 200_000).unwrap();
        let mut r = rng::stream(0, Domain::Aux(1), 0);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = Point::scalar(rng::unit_f64(&mut r));
            let rad = 10f64.powf(-r.gen_range(0.5..2.5));
            let a = exact.ball_mass(&x, rad).unwrap().mass;
            let b = emp.ball_mass(&x, rad).unwrap();
            let se = (a * (1.0 - a) / b.samples.unwrap() as f64).sqrt().max(1e-12);
            worst = worst.max((a - b.mass).abs() / se);
        }
        // 100 queries: the largest z-score should stay well inside 4
        assert!(worst < 4.0, "worst z = {worst}");
    }

    #[test]
    fn charged_cells_uniform_and_cantor() {
        let uni = ExactOracle::new(&MeasureModel::uniform_box(1).unwrap()).unwrap();
        let cells = uni.charged_cells(6, 1 << 20).unwrap();
        assert_eq!(cells.len(), 64);
        assert!(cells.iter().all(|(_, m)| *m == 1.0 / 64.0));
        let cantor = ExactOracle::new(&MeasureModel::cantor()).unwrap();
        let total: f64 = cantor.charged_cells(10, 1 << 20).unwrap().iter().map(|c| c.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(uni.charged_cells(30, 1 << 20).is_err());
    }

    #[test]
    fn empirical_cells_sum_to_one() {
        let model = MeasureModel::example(1.0 / 6.0, 1.3, 40).unwrap();
        let emp = EmpiricalOracle::new(&model, 2, 50_000).unwrap();
        let cells = emp.charged_cells(8, 1 << 20).unwrap();
        let total: f64 = cells.iter().map(|c| c.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let (idx, m) = &cells[0];
        assert_eq!(emp.cell_mass(8, idx).unwrap().mass, *m);
    }

    #[test]
    fn reservoir_cache_shares() {
        let model = MeasureModel::uniform_box(1).unwrap();
        let a = Reservoir::cached(&model, 99, 1000).unwrap();
        let b = Reservoir::cached(&model, 99, 1000).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.len(), 1000);
    }
}
