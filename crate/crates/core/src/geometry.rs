//! Points, balls, dyadic grids and box-count regression.
//!
//! Grids are anchored at the origin. A cell at level `n` is the half-open
//! product `[k_i 2^-n, (k_i + 1) 2^-n)`; a ball "hits" a cell when the closed
//! ball meets the cell's closure, so boundary contact counts as a hit.

use std::collections::HashSet;
use std::fmt;

use smallvec::SmallVec;
use thiserror::Error;

/// Default upper bound on the number of cells a single ball query may return.
pub const DEFAULT_CELL_BUDGET: u64 = 1 << 26;

/// Deepest grid level supported; cell indices must fit in an `i64`.
pub const MAX_LEVEL: u32 = 62;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in point")]
    NonFinite,
    #[error("ball radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("ambient dimension must be at least 1")]
    ZeroDimension,
    #[error("grid level {0} exceeds the supported maximum {MAX_LEVEL}")]
    LevelTooDeep(u32),
    #[error("ball needs {needed} cells at level {level}, budget is {budget}")]
    CellBudgetExceeded { level: u32, needed: u64, budget: u64 },
    #[error("need at least 3 distinct levels for a regression, got {0}")]
    InsufficientData(usize),
    #[error("count at level {0} is zero")]
    ZeroCount(u32),
}

/// A point of `R^d`.
#[derive(Clone, PartialEq)]
pub struct Point(SmallVec<[f64; 2]>);

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self, GeometryError> {
        if coords.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Point(SmallVec::from_slice(coords)))
    }

    /// One-dimensional point. Panics on a non-finite coordinate.
    pub fn scalar(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite coordinate {x}");
        Point(SmallVec::from_slice(&[x]))
    }

    pub(crate) fn from_vec_unchecked(coords: SmallVec<[f64; 2]>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// First coordinate; convenient for the one-dimensional models.
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn dist(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        if self.dim() == 1 {
            return (self.0[0] - other.0[0]).abs();
        }
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Point").field(&&self.0[..]).finish()
    }
}

/// Closed Euclidean ball.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    center: Point,
    radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::BadRadius(radius));
        }
        Ok(Ball { center, radius })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.center.dist(x) <= self.radius
    }

    /// `true` when `other` lies inside `self`.
    pub fn contains_ball(&self, other: &Ball) -> bool {
        self.center.dist(&other.center) + other.radius <= self.radius
    }

    /// Distance between the two closed balls (zero when they meet).
    pub fn dist_to(&self, other: &Ball) -> f64 {
        (self.center.dist(&other.center) - self.radius - other.radius).max(0.0)
    }
}

/// Integer coordinates of a dyadic cell.
pub type CellIndex = SmallVec<[i64; 2]>;

/// Origin-anchored dyadic grid of side `2^-level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyadicGrid {
    pub dim: usize,
    pub level: u32,
}

impl DyadicGrid {
    pub fn new(dim: usize, level: u32) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        if level > MAX_LEVEL {
            return Err(GeometryError::LevelTooDeep(level));
        }
        Ok(DyadicGrid { dim, level })
    }

    pub fn side(&self) -> f64 {
        exp2i(-(self.level as i32))
    }

    /// Lower corner and side of the cell.
    pub fn cell_bounds(&self, idx: &[i64]) -> (SmallVec<[f64; 2]>, f64) {
        let h = self.side();
        (idx.iter().map(|&k| k as f64 * h).collect(), h)
    }

    /// Ancestor of `idx` at the coarser level `coarse`.
    pub fn ancestor(&self, idx: &[i64], coarse: u32) -> CellIndex {
        debug_assert!(coarse <= self.level);
        let shift = self.level - coarse;
        idx.iter().map(|&k| k >> shift).collect()
    }
}

/// `2^e` for integer `e`, exact.
pub fn exp2i(e: i32) -> f64 {
    f64::powi(2.0, e)
}

/// The unique level-`level` cell containing `x` (half-open convention).
pub fn cell_of(x: &Point, level: u32) -> CellIndex {
    let scale = exp2i(level as i32);
    x.coords().iter().map(|&c| (c * scale).floor() as i64).collect()
}

/// Deduplicated set of cells sharing one grid level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellSet {
    level: u32,
    cells: HashSet<CellIndex>,
}

impl CellSet {
    pub fn new(level: u32) -> Self {
        CellSet { level, cells: HashSet::new() }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn insert(&mut self, idx: CellIndex) -> bool {
        self.cells.insert(idx)
    }

    pub fn contains(&self, idx: &[i64]) -> bool {
        self.cells.contains(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CellIndex> {
        self.cells.iter()
    }

    /// Merge `other` (same level) into `self`.
    pub fn union_with(&mut self, other: &CellSet) {
        assert_eq!(self.level, other.level, "cell sets at different levels");
        self.cells.extend(other.cells.iter().cloned());
    }

    /// Indices in lexicographic order; used for deterministic output.
    pub fn sorted(&self) -> Vec<CellIndex> {
        let mut v: Vec<_> = self.cells.iter().cloned().collect();
        v.sort();
        v
    }
}

impl Extend<CellIndex> for CellSet {
    fn extend<T: IntoIterator<Item = CellIndex>>(&mut self, iter: T) {
        self.cells.extend(iter)
    }
}

fn axis_range(c: f64, r: f64, scale: f64) -> (i64, i64) {
    // closure [k, k+1] (in cell units) meets [lo, hi]  <=>  k >= lo - 1 and k <= hi
    let lo = (c - r) * scale;
    let hi = (c + r) * scale;
    ((lo - 1.0).ceil() as i64, hi.floor() as i64)
}

fn dist_point_to_cell(x: &[f64], idx: &[i64], h: f64) -> f64 {
    let mut acc = 0.0;
    for (&c, &k) in x.iter().zip(idx) {
        let lo = k as f64 * h;
        let hi = lo + h;
        let d = if c < lo {
            lo - c
        } else if c > hi {
            c - hi
        } else {
            0.0
        };
        acc += d * d;
    }
    acc.sqrt()
}

/// Cells at `level` whose closure meets the closed ball, with the default budget.
pub fn cells_hit_by_ball(b: &Ball, level: u32) -> Result<CellSet, GeometryError> {
    cells_hit_by_ball_with_budget(b, level, DEFAULT_CELL_BUDGET)
}

pub fn cells_hit_by_ball_with_budget(
    b: &Ball,
    level: u32,
    budget: u64,
) -> Result<CellSet, GeometryError> {
    let mut out = CellSet::new(level);
    for_each_cell_hit(b, level, budget, |idx| {
        out.insert(idx);
    })?;
    Ok(out)
}

/// Visit every cell hit by `b` without materialising a set.
pub(crate) fn for_each_cell_hit(
    b: &Ball,
    level: u32,
    budget: u64,
    mut visit: impl FnMut(CellIndex),
) -> Result<(), GeometryError> {
    if level > MAX_LEVEL {
        return Err(GeometryError::LevelTooDeep(level));
    }
    let scale = exp2i(level as i32);
    let h = exp2i(-(level as i32));
    let c = b.center().coords();
    let ranges: SmallVec<[(i64, i64); 2]> =
        c.iter().map(|&ci| axis_range(ci, b.radius(), scale)).collect();
    let needed = ranges
        .iter()
        .map(|&(lo, hi)| (hi - lo + 1).max(0) as u64)
        .try_fold(1u64, |acc, n| acc.checked_mul(n))
        .unwrap_or(u64::MAX);
    if needed > budget {
        return Err(GeometryError::CellBudgetExceeded { level, needed, budget });
    }
    if c.len() == 1 {
        let (lo, hi) = ranges[0];
        for k in lo..=hi {
            visit(SmallVec::from_slice(&[k]));
        }
        return Ok(());
    }
    // odometer over the bounding box, keep cells within distance r
    let mut idx: CellIndex = ranges.iter().map(|r| r.0).collect();
    loop {
        if dist_point_to_cell(c, &idx, h) <= b.radius() {
            visit(idx.clone());
        }
        let mut axis = 0;
        loop {
            if axis == idx.len() {
                return Ok(());
            }
            if idx[axis] < ranges[axis].1 {
                idx[axis] += 1;
                break;
            }
            idx[axis] = ranges[axis].0;
            axis += 1;
        }
    }
}

/// Least-squares fit of `log2(count)` against level.
#[derive(Clone, Debug, PartialEq)]
pub struct DimEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub level_range: (u32, u32),
    /// Root-mean-square of the regression residuals.
    pub residual: f64,
}

/// Ordinary least squares `y = slope * x + intercept`; returns (slope, intercept, rms).
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    (slope, intercept, (ss / n).sqrt())
}

pub fn dim_from_counts(counts: &[(u32, u64)]) -> Result<DimEstimate, GeometryError> {
    let mut levels: Vec<u32> = counts.iter().map(|c| c.0).collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 3 {
        return Err(GeometryError::InsufficientData(levels.len()));
    }
    if let Some(&(lvl, _)) = counts.iter().find(|c| c.1 == 0) {
        return Err(GeometryError::ZeroCount(lvl));
    }
    let xs: Vec<f64> = counts.iter().map(|c| c.0 as f64).collect();
    let ys: Vec<f64> = counts.iter().map(|c| (c.1 as f64).log2()).collect();
    let (slope, intercept, residual) = ols(&xs, &ys);
    Ok(DimEstimate {
        slope,
        intercept,
        level_range: (levels[0], *levels.last().unwrap()),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball1(c: f64, r: f64) -> Ball {
        Ball::new(Point::scalar(c), r).unwrap()
    }

    #[test]
    fn cell_of_examples() {
        assert_eq!(cell_of(&Point::scalar(0.4), 2).as_slice(), &[1]);
        assert_eq!(cell_of(&Point::scalar(0.0), 5).as_slice(), &[0]);
        assert_eq!(cell_of(&Point::scalar(0.25), 2).as_slice(), &[1]);
    }

    #[test]
    fn ball_hits_two_cells() {
        let s = cells_hit_by_ball(&ball1(0.5, 0.1), 2).unwrap();
        assert_eq!(s.sorted(), vec![CellIndex::from_slice(&[1]), CellIndex::from_slice(&[2])]);
    }

    #[test]
    fn boundary_touch_counts() {
        assert!(Ball::new(Point::scalar(0.5), 0.0).is_err());
        let s = cells_hit_by_ball(&ball1(0.5, 1e-9), 1).unwrap();
        assert_eq!(s.len(), 2);
    }

    fn brute_force_hits(b: &Ball, level: u32, box_lo: i64, box_hi: i64) -> Vec<CellIndex> {
        let h = exp2i(-(level as i32));
        let d = b.center().dim();
        let mut out = Vec::new();
        let side = (box_hi - box_lo + 1) as usize;
        for flat in 0..side.pow(d as u32) {
            let mut rem = flat;
            let idx: CellIndex = (0..d)
                .map(|_| {
                    let k = (rem % side) as i64 + box_lo;
                    rem /= side;
                    k
                })
                .collect();
            if dist_point_to_cell(b.center().coords(), &idx, h) <= b.radius() {
                out.push(idx);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn two_dim_block() {
        let b = Ball::new(Point::new(&[0.1, 0.1]).unwrap(), 0.05).unwrap();
        let got = cells_hit_by_ball(&b, 3).unwrap().sorted();
        let want = brute_force_hits(&b, 3, 0, 7);
        assert_eq!(got, want);
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn budget_is_enforced() {
        let err = cells_hit_by_ball_with_budget(&ball1(0.5, 0.5), 20, 1000).unwrap_err();
        assert!(matches!(err, GeometryError::CellBudgetExceeded { .. }));
    }

    #[test]
    fn regression_examples() {
        let full: Vec<_> = (4..=10).map(|j| (j, 1u64 << j)).collect();
        let e = dim_from_counts(&full).unwrap();
        assert!((e.slope - 1.0).abs() < 1e-12 && e.residual < 1e-12);

        let point: Vec<_> = (4..=10).map(|j| (j, 1u64)).collect();
        assert_eq!(dim_from_counts(&point).unwrap().slope, 0.0);

        assert!(matches!(
            dim_from_counts(&[(1, 2), (2, 4)]),
            Err(GeometryError::InsufficientData(2))
        ));
    }

    /// Number of level-`level` dyadic cells met by the stage-`k` triadic
    /// intervals, with `k` deep enough that the triadic intervals are much
    /// finer than the cells.
    fn triadic_cover_count(level: u32) -> u64 {
        let k = (level as f64 / 3f64.log2()).ceil() as u32 + 3;
        let mut intervals = vec![(0.0f64, 1.0f64)];
        for _ in 0..k {
            intervals = intervals
                .iter()
                .flat_map(|&(a, w)| [(a, w / 3.0), (a + 2.0 * w / 3.0, w / 3.0)])
                .collect();
        }
        let mut cells = CellSet::new(level);
        for (a, w) in intervals {
            let b = Ball::new(Point::scalar(a + w / 2.0), w / 2.0).unwrap();
            cells.union_with(&cells_hit_by_ball(&b, level).unwrap());
        }
        cells.len() as u64
    }

    #[test]
    fn cantor_counts_slope() {
        // synthetic counts at the Cantor exponent, cross-checked against a
        // direct triadic cover at a couple of levels
        let counts: Vec<_> =
            (6..=14).map(|j| (j, 2f64.powf(0.6309 * j as f64).round() as u64)).collect();
        let e = dim_from_counts(&counts).unwrap();
        assert!((e.slope - 0.631).abs() < 0.01, "{}", e.slope);

        let direct: Vec<_> = (6..=12).map(|j| (j, triadic_cover_count(j))).collect();
        let d = dim_from_counts(&direct).unwrap();
        assert!((d.slope - 0.6309).abs() < 0.06, "{}", d.slope);
    }

    proptest! {
        #[test]
        fn point_lies_in_its_cell(x in -4.0f64..4.0, y in -4.0f64..4.0, level in 0u32..30) {
            let p = Point::new(&[x, y]).unwrap();
            let idx = cell_of(&p, level);
            let grid = DyadicGrid::new(2, level).unwrap();
            let (lo, h) = grid.cell_bounds(&idx);
            for (c, l) in p.coords().iter().zip(lo.iter()) {
                prop_assert!(*l <= *c && *c < l + h);
            }
        }

        #[test]
        fn hits_match_brute_force(cx in 0.0f64..1.0, cy in 0.0f64..1.0, r in 1e-4f64..0.3, level in 0u32..=8) {
            let b = Ball::new(Point::new(&[cx, cy]).unwrap(), r).unwrap();
            let got = cells_hit_by_ball(&b, level).unwrap().sorted();
            let n = 1i64 << level;
            let want = brute_force_hits(&b, level, -n, 2 * n);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn enlarging_never_shrinks(c in 0.0f64..1.0, r in 1e-5f64..0.2, grow in 1.0f64..4.0, level in 0u32..16) {
            let small = cells_hit_by_ball(&ball1(c, r), level).unwrap();
            let big = cells_hit_by_ball(&ball1(c, r * grow), level).unwrap();
            prop_assert!(small.iter().all(|i| big.contains(i)));
        }

        #[test]
        fn slope_scale_invariant(base in prop::collection::vec(1u64..1000, 4..9), mult in 1u64..50) {
            let a: Vec<_> = base.iter().enumerate().map(|(i, &c)| (i as u32 + 3, c)).collect();
            let b: Vec<_> = a.iter().map(|&(l, c)| (l, c * mult)).collect();
            let ea = dim_from_counts(&a).unwrap();
            let eb = dim_from_counts(&b).unwrap();
            prop_assert!((ea.slope - eb.slope).abs() < 1e-9);
            prop_assert!((eb.intercept - ea.intercept - (mult as f64).log2()).abs() < 1e-9);
        }
    }
}
