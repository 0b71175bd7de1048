//! Dyadic index windows `W_j = [2^j, 2^{j+1})` and the window unions `U_j`,
//! each rasterised at a grid level matched to the radii of its window.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::{CoverSequence, CoveringError};
use crate::geometry::{
    dim_from_counts, for_each_cell_hit, CellIndex, CellSet, DimEstimate, DyadicGrid, GeometryError,
    DEFAULT_CELL_BUDGET, MAX_LEVEL,
};

pub const MIN_WINDOWS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub j: u32,
    /// First index, `2^j`.
    pub start: u64,
    /// One past the last index, `2^{j+1}`.
    pub end: u64,
    /// Grid level at which the window union is rasterised.
    pub level: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowFamily {
    windows: Vec<Window>,
}

impl WindowFamily {
    /// Windows `j_min..=j_max`; level `n_j = round(-log2 r(2^{j+1}))`, which is
    /// `round(alpha (j+1))` for the power schedule.
    pub fn new(cover: &CoverSequence, j_min: u32, j_max: u32) -> Result<Self, CoveringError> {
        if j_max < j_min {
            return Err(CoveringError::TooFewWindows { got: 0, need: MIN_WINDOWS });
        }
        if j_max >= 62 || (1u64 << (j_max + 1)) > cover.n_max() {
            return Err(CoveringError::BeyondCover {
                needed: 1u64.checked_shl(j_max + 1).unwrap_or(u64::MAX),
                n_max: cover.n_max(),
            });
        }
        let windows = (j_min..=j_max)
            .map(|j| {
                let end = 1u64 << (j + 1);
                let level = (-cover.radius(end).log2()).round().max(0.0);
                if level > MAX_LEVEL as f64 {
                    return Err(GeometryError::LevelTooDeep(level as u32).into());
                }
                Ok(Window { j, start: 1u64 << j, end, level: level as u32 })
            })
            .collect::<Result<Vec<_>, CoveringError>>()?;
        Ok(WindowFamily { windows })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// The first `len` windows.
    pub fn truncated(&self, len: usize) -> Self {
        WindowFamily { windows: self.windows[..len.min(self.windows.len())].to_vec() }
    }
}

/// One row of the per-window occupancy table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowRow {
    pub j: u32,
    pub level: u32,
    /// `|U_j|` at `level`.
    pub cells_hit: u64,
    /// `|U_{j_min} ∩ ... ∩ U_j|` at `level`.
    pub cells_in_intersection: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimsupApprox {
    /// The nested intersection at the finest window level.
    pub cells: CellSet,
    pub rows: Vec<WindowRow>,
}

impl LimsupApprox {
    /// Largest `j` whose partial intersection is nonempty.
    pub fn last_nonempty_j(&self) -> Option<u32> {
        self.rows.iter().filter(|r| r.cells_in_intersection > 0).map(|r| r.j).next_back()
    }
}

fn window_union(cover: &CoverSequence, w: &Window) -> Result<HashSet<CellIndex>, CoveringError> {
    (w.start..w.end)
        .into_par_iter()
        .try_fold(HashSet::new, |mut set, n| {
            for_each_cell_hit(&cover.ball(n), w.level, DEFAULT_CELL_BUDGET, |c| {
                set.insert(c);
            })?;
            Ok::<_, CoveringError>(set)
        })
        .try_reduce(HashSet::new, |mut a, b| {
            if a.len() < b.len() {
                return Ok(b.into_iter().chain(a).collect());
            }
            a.extend(b);
            Ok(a)
        })
}

/// Cells at the finest window level whose ancestor at every level `n_j` is
/// hit by a ball with index in `W_j`.
pub fn limsup_approx(cover: &CoverSequence, windows: &WindowFamily) -> Result<LimsupApprox, CoveringError> {
    if windows.len() < MIN_WINDOWS {
        return Err(CoveringError::TooFewWindows { got: windows.len(), need: MIN_WINDOWS });
    }
    let unions = windows
        .windows()
        .par_iter()
        .map(|w| window_union(cover, w))
        .collect::<Result<Vec<_>, _>>()?;
    let dim = cover.config().model.dim();
    let mut rows = Vec::with_capacity(unions.len());
    let mut inter: HashSet<CellIndex> = HashSet::new();
    let mut prev_level = 0;
    for (i, (w, u)) in windows.windows().iter().zip(&unions).enumerate() {
        inter = if i == 0 {
            u.clone()
        } else {
            let grid = DyadicGrid::new(dim, w.level)?;
            u.iter()
                .filter(|c| inter.contains(&grid.ancestor(c, prev_level)))
                .cloned()
                .collect()
        };
        prev_level = w.level;
        rows.push(WindowRow {
            j: w.j,
            level: w.level,
            cells_hit: u.len() as u64,
            cells_in_intersection: inter.len() as u64,
        });
    }
    let mut cells = CellSet::new(prev_level);
    cells.extend(inter);
    Ok(LimsupApprox { cells, rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimsupEstimate {
    pub estimate: DimEstimate,
    pub rows: Vec<WindowRow>,
    pub last_nonempty_j: Option<u32>,
}

/// Box-dimension estimate of the limsup set from the window covers: the
/// slope of `log2 |U_j|` against the window level `n_j`.
pub fn estimate_dim_limsup(cover: &CoverSequence, windows: &WindowFamily) -> Result<LimsupEstimate, CoveringError> {
    let approx = limsup_approx(cover, windows)?;
    if let Some(r) = approx.rows.iter().find(|r| r.cells_hit == 0) {
        return Err(CoveringError::Degenerate { j: r.j });
    }
    let counts: Vec<(u32, u64)> = approx.rows.iter().map(|r| (r.level, r.cells_hit)).collect();
    let estimate = dim_from_counts(&counts)?;
    let last_nonempty_j = approx.last_nonempty_j();
    Ok(LimsupEstimate { estimate, rows: approx.rows, last_nonempty_j })
}

/// CSV with columns `j,level,cells_hit,cells_in_intersection`.
pub fn window_table_csv(rows: &[WindowRow], meta: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str("j,level,cells_hit,cells_in_intersection\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.j, r.level, r.cells_hit, r.cells_in_intersection);
    }
    out
}
