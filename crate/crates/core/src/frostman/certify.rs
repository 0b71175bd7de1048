use std::fmt::Write as _;

use rayon::prelude::*;

use super::energy::min_uniform_constant;
use super::{FractalTree, FrostmanError};
use crate::geometry::Point;

/// Largest admissible last-generation increment, relative to the total.
pub const CAUCHY_RATIO: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    pub s: f64,
    /// Energy of the atomic measure with mass `theta(L)` at each leaf centre.
    pub direct_energy: f64,
    /// `(2^t s / (s - t)) sum_B theta(B)^2 c_B |B|^{s - t}` over expanded nodes.
    pub bound_energy: f64,
    /// `partial_direct[g]`: leaf pairs whose last common ancestor has
    /// generation at most `g`.
    pub partial_direct: Vec<f64>,
    /// `partial_bound[g]`: bound terms of nodes of generation at most `g`.
    pub partial_bound: Vec<f64>,
    /// Expanded nodes whose stored `c_B` was below the exact uniformity
    /// constant of their children and was raised to it.
    pub raised_constants: usize,
}

impl EnergyReport {
    /// `partial_bound[g] - partial_bound[g - 1]`.
    pub fn bound_increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.partial_bound
            .iter()
            .map(|&p| {
                let d = p - prev;
                prev = p;
                d
            })
            .collect()
    }

    /// CSV with columns `generation,partial_direct,partial_bound`.
    pub fn to_csv(&self, meta: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "# t: {}", self.t);
        let _ = writeln!(out, "# s: {}", self.s);
        out.push_str("generation,partial_direct,partial_bound\n");
        for (g, (d, b)) in self.partial_direct.iter().zip(&self.partial_bound).enumerate() {
            let _ = writeln!(out, "{g},{d},{b}");
        }
        out
    }
}

/// Direct and bounding energies of the tree measure truncated at the deepest
/// generation. `c_B` is taken as the larger of the stored value and the exact
/// `(c, s)'` constant of the uniform measure on the children's centres, so the
/// bound holds for any tree passing the separation check.
pub fn tree_energy(tree: &FractalTree, t: f64, s: f64) -> Result<EnergyReport, FrostmanError> {
    if !(t > 0.0 && t < s && s.is_finite()) {
        return Err(FrostmanError::Precondition(format!("need 0 < t < s, got t = {t}, s = {s}")));
    }
    let depth = tree.depth() as usize;
    let nodes = tree.nodes();

    let leaves: Vec<usize> = tree.leaves().map(|n| n.id).collect();
    let paths: Vec<Vec<usize>> = leaves
        .iter()
        .map(|&l| {
            let mut path = vec![l];
            while let Some(p) = nodes[*path.last().expect("nonempty")].parent {
                path.push(p);
            }
            path.reverse();
            path
        })
        .collect();
    let by_gen = (0..leaves.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; depth.max(1)];
            let (a, wa) = (nodes[leaves[i]].ball.center(), nodes[leaves[i]].weight);
            for j in i + 1..leaves.len() {
                let b = nodes[leaves[j]].ball.center();
                let lca = (0..depth).rev().find(|&g| paths[i][g] == paths[j][g]).expect("root is shared");
                let d = a.dist(b);
                acc[lca] += if d == 0.0 { f64::INFINITY } else { 2.0 * wa * nodes[leaves[j]].weight * d.powf(-t) };
            }
            acc
        })
        .reduce(
            || vec![0.0; depth.max(1)],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
                x
            },
        );

    let factor = 2f64.powf(t) * s / (s - t);
    let terms = nodes
        .par_iter()
        .filter(|n| !n.children.is_empty())
        .map(|n| {
            let centres: Vec<Point> = n.children.iter().map(|&c| nodes[c].ball.center().clone()).collect();
            let w = vec![1.0 / centres.len() as f64; centres.len()];
            let exact = min_uniform_constant(&centres, &w, s)?;
            let stored = n.c_b.unwrap_or(0.0);
            let c = stored.max(exact);
            let term = factor * n.weight * n.weight * c * n.ball.diameter().powf(s - t);
            Ok((n.generation as usize, term, exact > stored))
        })
        .collect::<Result<Vec<_>, FrostmanError>>()?;
    let mut bound_gen = vec![0.0; depth];
    let mut raised = 0;
    for (g, term, r) in terms {
        bound_gen[g] += term;
        raised += r as usize;
    }

    let cumsum = |v: &[f64]| {
        let mut acc = 0.0;
        v.iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect::<Vec<f64>>()
    };
    let partial_direct = cumsum(&by_gen[..depth]);
    let partial_bound = cumsum(&bound_gen);
    Ok(EnergyReport {
        t,
        s,
        direct_energy: partial_direct.last().copied().unwrap_or(0.0),
        bound_energy: partial_bound.last().copied().unwrap_or(0.0),
        partial_direct,
        partial_bound,
        raised_constants: raised,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    CertifiedAtT,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub verdict: Verdict,
    pub report: EnergyReport,
    pub reason: String,
}

/// Certified when the bound is finite, spans at least two generations, and
/// its last-generation increment is below `CAUCHY_RATIO` of the total.
pub fn certify_lower_bound(tree: &FractalTree, t: f64, s: f64) -> Result<Certificate, FrostmanError> {
    let report = tree_energy(tree, t, s)?;
    let total = report.bound_energy;
    let (verdict, reason) = if report.partial_bound.len() < 2 {
        (Verdict::Inconclusive, format!("{} expanded generation(s); need 2", report.partial_bound.len()))
    } else if !total.is_finite() {
        (Verdict::Inconclusive, "bound is infinite".to_string())
    } else {
        let last = *report.bound_increments().last().expect("at least two generations");
        if last < CAUCHY_RATIO * total {
            (Verdict::CertifiedAtT, format!("last increment {last} < {CAUCHY_RATIO} x total {total}"))
        } else {
            (Verdict::Inconclusive, format!("last increment {last} >= {CAUCHY_RATIO} x total {total}"))
        }
    };
    Ok(Certificate { verdict, report, reason })
}
