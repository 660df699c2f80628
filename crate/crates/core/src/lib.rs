//! Semiconjugacies of degree-d coverings of the circle and the open annulus
//! onto the model map `z -> z^d`.
//!
//! Circle maps are stored as lifts `F: R -> R` with `F(x + 1) = F(x) + d`,
//! sampled on a uniform grid of `[0, 1]`. Annulus maps are skew products on
//! `(0, 1) x R` with an equivariant fiber lift.

pub mod annulus;
pub mod circle;
pub mod classify;
pub mod connectors;
pub mod error;
pub mod obstruction;
pub mod semiconj1d;
pub mod semiconj2d;
pub mod stability;

pub use error::{Error, Result};

/// Distance on `R/Z`.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let r = (a - b).rem_euclid(1.0);
    r.min(1.0 - r)
}

/// Representative of `a` in `[0, 1)`.
pub fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_distance_wraps() {
        assert!((circle_dist(0.05, 0.95) - 0.1).abs() < 1e-12);
        assert_eq!(circle_dist(0.3, 1.3), 0.0);
        assert_eq!(wrap(-0.25), 0.75);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }
}
