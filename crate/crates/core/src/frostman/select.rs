use std::collections::HashMap;

use smallvec::SmallVec;

use super::{invalid, FrostmanError, SelectionParams};
use crate::geometry::Point;
use crate::measures::MassOracle;

type Key = SmallVec<[i64; 2]>;

/// Hash grid with cell side equal to a separation distance, so every point
/// closer than `side` lies in a neighbouring cell.
pub(super) struct SeparationGrid {
    side: f64,
    cells: HashMap<Key, Vec<usize>>,
}

impl SeparationGrid {
    pub(super) fn new(side: f64) -> Self {
        SeparationGrid { side, cells: HashMap::new() }
    }

    fn key(&self, x: &Point) -> Key {
        // `as` saturates, which only merges far-away cells
        x.coords().iter().map(|c| (c / self.side).floor() as i64).collect()
    }

    pub(super) fn insert(&mut self, x: &Point, id: usize) {
        self.cells.entry(self.key(x)).or_default().push(id);
    }

    /// `true` when `pred` holds for some id stored in a cell next to `x`.
    pub(super) fn any_near(&self, x: &Point, mut pred: impl FnMut(usize) -> bool) -> bool {
        let base = self.key(x);
        let d = base.len();
        let mut offs: Key = SmallVec::from_elem(-1, d);
        loop {
            let k: Key = base.iter().zip(&offs).map(|(b, o)| b.saturating_add(*o)).collect();
            if let Some(list) = self.cells.get(&k) {
                if list.iter().any(|&i| pred(i)) {
                    return true;
                }
            }
            let mut axis = 0;
            loop {
                if axis == d {
                    return false;
                }
                if offs[axis] < 1 {
                    offs[axis] += 1;
                    break;
                }
                offs[axis] = -1;
                axis += 1;
            }
        }
    }
}

/// Greedy separated selection from a batch of cover points, in index order.
///
/// A point is eligible when it lies in the closed ball `params.ball` and
/// `mu(B(x, r_n)) >= r_n^{u + eps}`; it is kept when it is at distance at
/// least `8 r_n` from every point kept before it. The batch must be sorted by
/// strictly increasing index; points outside the ball may be omitted.
pub fn greedy_select(
    batch: &[(u64, Point)],
    params: &SelectionParams,
    r_n: f64,
    oracle: &dyn MassOracle,
) -> Result<Vec<(u64, Point)>, FrostmanError> {
    params.validate()?;
    if !(r_n > 0.0 && r_n.is_finite()) {
        return Err(invalid("r_n", format!("must be positive, got {r_n}")));
    }
    if batch.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(invalid("batch", "indices must be strictly increasing"));
    }
    let threshold = r_n.powf(params.u + params.eps);
    let sep = 8.0 * r_n;
    let mut grid = SeparationGrid::new(sep);
    let mut kept: Vec<(u64, Point)> = Vec::new();
    for (k, x) in batch {
        if !params.ball.contains(x) || grid.any_near(x, |i| kept[i].1.dist(x) < sep) {
            continue;
        }
        if oracle.ball_mass(x, r_n)?.mass < threshold {
            continue;
        }
        grid.insert(x, kept.len());
        kept.push((*k, x.clone()));
    }
    Ok(kept)
}
