use rayon::prelude::*;

use super::{invalid, FrostmanError};
use crate::geometry::{Ball, Point};

fn check_atoms(points: &[Point], weights: &[f64]) -> Result<(), FrostmanError> {
    if points.is_empty() {
        return Err(invalid("points", "need at least one atom"));
    }
    if points.len() != weights.len() {
        return Err(invalid("weights", format!("{} weights for {} atoms", weights.len(), points.len())));
    }
    let d = points[0].dim();
    if points.iter().any(|p| p.dim() != d) {
        return Err(invalid("points", "atoms have mixed dimensions"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(invalid("weights", format!("weight {w} is not a nonnegative number")));
    }
    Ok(())
}

/// `sum_{i != j} w_i w_j |x_i - x_j|^-t`. Two distinct charged atoms at the
/// same location give `f64::INFINITY`.
pub fn discrete_energy(points: &[Point], weights: &[f64], t: f64) -> Result<f64, FrostmanError> {
    check_atoms(points, weights)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    let half: f64 = (0..points.len())
        .into_par_iter()
        .map(|i| {
            if weights[i] == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for j in i + 1..points.len() {
                if weights[j] == 0.0 {
                    continue;
                }
                let d = points[i].dist(&points[j]);
                acc += if d == 0.0 { f64::INFINITY } else { weights[i] * weights[j] * d.powf(-t) };
            }
            acc
        })
        .sum();
    Ok(2.0 * half)
}

/// Distances from atom `i` to the other charged atoms, sorted, with the
/// cumulative mass within each distance.
fn punctured_profile(points: &[Point], weights: &[f64], i: usize) -> Vec<(f64, f64)> {
    let mut d: Vec<(f64, f64)> = (0..points.len())
        .filter(|&j| j != i && weights[j] > 0.0)
        .map(|j| (points[i].dist(&points[j]), weights[j]))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(d.len());
    let mut m = 0.0;
    for (r, w) in d {
        m += w;
        match out.last_mut() {
            Some(last) if last.0 == r => last.1 = m,
            _ => out.push((r, m)),
        }
    }
    out
}

/// Least `c` with `nu(B(x, r) \ {x}) <= c r^s` for every charged atom `x`
/// and every `r > 0`. The ratio only peaks at the distances to other atoms.
pub fn min_uniform_constant(points: &[Point], weights: &[f64], s: f64) -> Result<f64, FrostmanError> {
    check_atoms(points, weights)?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid("s", format!("must be positive, got {s}")));
    }
    let c = (0..points.len())
        .into_par_iter()
        .filter(|&i| weights[i] > 0.0)
        .map(|i| {
            punctured_profile(points, weights, i)
                .into_iter()
                .map(|(r, m)| if r == 0.0 { f64::INFINITY } else { m / r.powf(s) })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RestrictionOutcome {
    /// Uniformity verified; `holds` is `energy <= bound`.
    Checked { holds: bool, energy: f64, bound: f64, slack: f64 },
    /// Uniformity fails at atom `atom`: `nu(B(x, radius) \ {x}) = mass > allowed`.
    HypothesisFailure { atom: usize, radius: f64, mass: f64, allowed: f64 },
}

impl RestrictionOutcome {
    pub fn holds(&self) -> Option<bool> {
        match self {
            RestrictionOutcome::Checked { holds, .. } => Some(*holds),
            RestrictionOutcome::HypothesisFailure { .. } => None,
        }
    }
}

/// Compare `I'_t(nu|A)` with `(c s / (s - t)) |A|^{s - t} nu(A)`, where
/// `|A|` is the diameter of the ball `a`.
pub fn check_restriction_bound(
    points: &[Point],
    weights: &[f64],
    a: &Ball,
    c: f64,
    s: f64,
    t: f64,
) -> Result<RestrictionOutcome, FrostmanError> {
    check_atoms(points, weights)?;
    if !(t > 0.0 && t < s) {
        return Err(FrostmanError::Precondition(format!("need 0 < t < s, got t = {t}, s = {s}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c", format!("must be positive, got {c}")));
    }
    for i in (0..points.len()).filter(|&i| weights[i] > 0.0) {
        for (r, m) in punctured_profile(points, weights, i) {
            let allowed = c * r.powf(s);
            if m > allowed {
                return Ok(RestrictionOutcome::HypothesisFailure { atom: i, radius: r, mass: m, allowed });
            }
        }
    }
    let (inside_p, inside_w): (Vec<Point>, Vec<f64>) = points
        .iter()
        .zip(weights)
        .filter(|(p, _)| a.contains(p))
        .map(|(p, &w)| (p.clone(), w))
        .unzip();
    let (energy, mass) = if inside_p.is_empty() {
        (0.0, 0.0)
    } else {
        (discrete_energy(&inside_p, &inside_w, t)?, inside_w.iter().sum())
    };
    let bound = c * s / (s - t) * a.diameter().powf(s - t) * mass;
    Ok(RestrictionOutcome::Checked { holds: energy <= bound, energy, bound, slack: bound - energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| Point::scalar(x)).collect()
    }

    #[test]
    fn energy_examples() {
        let e = discrete_energy(&pts(&[0.0, 1.0]), &[0.5, 0.5], 0.7).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        assert_eq!(discrete_energy(&pts(&[0.3]), &[1.0], 0.5).unwrap(), 0.0);
        assert_eq!(discrete_energy(&pts(&[0.3, 0.3]), &[0.5, 0.5], 0.5).unwrap(), f64::INFINITY);
        assert_eq!(discrete_energy(&pts(&[0.3, 0.3]), &[1.0, 0.0], 0.5).unwrap(), 0.0);
        assert!(discrete_energy(&[], &[], 0.5).is_err());
        assert!(discrete_energy(&pts(&[0.0]), &[1.0], 0.0).is_err());
    }

    #[test]
    fn energy_four_atoms_brute_force() {
        let xs: [f64; 4] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let mut brute = 0.0;
        for (i, a) in xs.iter().enumerate() {
            for (j, b) in xs.iter().enumerate() {
                if i != j {
                    brute += 0.0625 * (a - b).abs().powf(-0.5);
                }
            }
        }
        let e = discrete_energy(&pts(&xs), &[0.25; 4], 0.5).unwrap();
        assert!((e - brute).abs() < 1e-12 * brute);
    }

    #[test]
    fn uniform_constant_examples() {
        // two atoms at distance 1, weight 1/2: sup_r (1/2) / r^s at r = 1
        assert_eq!(min_uniform_constant(&pts(&[0.0, 1.0]), &[0.5, 0.5], 1.0).unwrap(), 0.5);
        assert_eq!(min_uniform_constant(&pts(&[0.2]), &[1.0], 1.0).unwrap(), 0.0);
        // three atoms at 0, 0.1, 1 with equal weight: worst is 1/3 / 0.1
        let c = min_uniform_constant(&pts(&[0.0, 0.1, 1.0]), &[1.0 / 3.0; 3], 1.0).unwrap();
        assert!((c - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn restriction_examples() {
        let p = pts(&[0.0, 1.0]);
        let a = Ball::new(Point::scalar(0.5), 0.5).unwrap();
        match check_restriction_bound(&p, &[0.5, 0.5], &a, 0.5, 1.0, 0.5).unwrap() {
            RestrictionOutcome::Checked { holds, energy, bound, slack } => {
                assert!(holds);
                assert!((energy - 0.5).abs() < 1e-15);
                assert!((bound - 1.0).abs() < 1e-15);
                assert!((slack - 0.5).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            check_restriction_bound(&p, &[0.5, 0.5], &a, 0.5, 1.0, 1.0),
            Err(FrostmanError::Precondition(_))
        ));
        let out = check_restriction_bound(&p, &[0.5, 0.5], &a, 0.25, 1.0, 0.5).unwrap();
        assert!(matches!(out, RestrictionOutcome::HypothesisFailure { radius, .. } if radius == 1.0));
        assert_eq!(out.holds(), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn restriction_bound_holds(
            xs in prop::collection::vec(-1.0f64..1.0, 1..40),
            raw_w in prop::collection::vec(0.01f64..1.0, 40),
            s in 0.2f64..2.0,
            t_frac in 0.05f64..0.95,
            inflate in 1.0f64..3.0,
            centre in -1.0f64..1.0,
            radius in 0.01f64..2.0,
        ) {
            let p = pts(&xs);
            let total: f64 = raw_w[..xs.len()].iter().sum();
            let w: Vec<f64> = raw_w[..xs.len()].iter().map(|v| v / total).collect();
            let c = min_uniform_constant(&p, &w, s).unwrap().max(1e-12) * inflate;
            prop_assume!(c.is_finite());
            let a = Ball::new(Point::scalar(centre), radius).unwrap();
            let out = check_restriction_bound(&p, &w, &a, c, s, t_frac * s).unwrap();
            prop_assert_eq!(out.holds(), Some(true), "{:?}", out);
        }

        #[test]
        fn energy_monotone_in_t(
            xs in prop::collection::vec(0.0f64..1.0, 2..30),
            t1 in 0.05f64..0.9,
            dt in 0.0f64..0.5,
        ) {
            let p = pts(&xs);
            let w = vec![1.0 / xs.len() as f64; xs.len()];
            let e1 = discrete_energy(&p, &w, t1).unwrap();
            let e2 = discrete_energy(&p, &w, t1 + dt).unwrap();
            prop_assert!(e1 <= e2 || (e1.is_infinite() && e2.is_infinite()));
        }
    }
}
