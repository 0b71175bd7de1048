//! Ternary Cantor set utilities: the Cantor function, distance to `C`, and
//! the ternary descent used to locate points relative to the construction
//! intervals `C_k`.

/// Absolute tolerance for interval comparisons during ternary descent.
pub(crate) const DESCENT_TOL: f64 = 2e-15;

/// Descent stops once construction intervals are this short; the point is
/// then indistinguishable from `C` at `f64` resolution.
pub(crate) const DESCENT_FLOOR: f64 = 1e-13;

pub fn log3_2() -> f64 {
    std::f64::consts::LN_2 / 3f64.ln()
}

/// Cantor function (distribution function of the uniform Cantor measure).
pub fn cantor_function(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let mut y = x;
    let mut acc = 0.0;
    let mut weight = 0.5;
    for _ in 0..64 {
        y *= 3.0;
        if y < 1.0 {
            // first third
        } else if y < 2.0 {
            return acc + weight;
        } else {
            acc += weight;
            y -= 2.0;
        }
        weight *= 0.5;
        if weight < 1e-19 {
            break;
        }
    }
    acc
}

/// Euclidean distance from `x` to the ternary Cantor set.
pub fn dist_to_cantor(x: f64) -> f64 {
    if x <= 0.0 {
        return -x;
    }
    if x >= 1.0 {
        return x - 1.0;
    }
    let mut left = 0.0;
    let mut width = 1.0;
    while width > DESCENT_FLOOR {
        let third = width / 3.0;
        let gap_lo = left + third;
        let gap_hi = left + 2.0 * third;
        if x <= gap_lo {
            width = third;
        } else if x >= gap_hi {
            left = gap_hi;
            width = third;
        } else {
            return (x - gap_lo).min(gap_hi - x);
        }
    }
    0.0
}

/// Where a point sits in the construction of `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum TernaryPosition {
    /// Inside the closed middle ninth of an interval of `C_k`.
    MiddleNinth(u32),
    /// In the removed middle third of an interval of `C_k` but outside its
    /// middle ninth.
    Gap(u32),
    /// Within resolution of `C`.
    Cantor,
    Outside,
}

pub(crate) fn ternary_position(x: f64) -> TernaryPosition {
    let tol = DESCENT_TOL;
    if !(-tol..=1.0 + tol).contains(&x) {
        return TernaryPosition::Outside;
    }
    let mut left = 0.0;
    let mut width = 1.0;
    let mut k = 0u32;
    while width > DESCENT_FLOOR {
        let ninth = width / 9.0;
        let third = width / 3.0;
        if x >= left + 4.0 * ninth - tol && x <= left + 5.0 * ninth + tol {
            return TernaryPosition::MiddleNinth(k);
        }
        if x <= left + third + tol {
            width = third;
        } else if x >= left + 2.0 * third - tol {
            left += 2.0 * third;
            width = third;
        } else {
            return TernaryPosition::Gap(k);
        }
        k += 1;
    }
    TernaryPosition::Cantor
}
