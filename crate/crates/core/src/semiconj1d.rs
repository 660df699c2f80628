//! Semiconjugacy lifts `H` with `H(F(x)) = d H(x)` for circle maps, found as
//! the fixed point of `T(H) = H(F(.)) / d`, and the group of self-conjugacies
//! of `z -> z^d`.

use serde::{Deserialize, Serialize};

use crate::circle::LiftedCircleMap;
use crate::error::{Error, Result};
use crate::{circle_dist, wrap};

/// Sign `o` in `H(x + 1) = H(x) + o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "+")]
    Preserving,
    #[serde(rename = "-")]
    Reversing,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Preserving => 1.0,
            Orientation::Reversing => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Self {
        if s < 0.0 {
            Orientation::Reversing
        } else {
            Orientation::Preserving
        }
    }
}

/// Grid samples of a semiconjugacy lift on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemiconjugacyField1D {
    samples: Vec<f64>,
    orientation: Orientation,
    degree: i64,
    /// `sup |H(F(x)) - d H(x)|` over the grid points.
    pub residual: f64,
    /// The same quantity over `10 N` points between grid nodes.
    pub off_grid_residual: f64,
    pub iterations: usize,
}

impl SemiconjugacyField1D {
    /// Wraps `N + 1` samples; the last one is reset to `first + o`.
    pub fn from_samples(mut samples: Vec<f64>, orientation: Orientation, degree: i64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples { cells: 0 });
        }
        let last = samples.len() - 1;
        samples[last] = samples[0] + orientation.sign();
        Ok(Self {
            samples,
            orientation,
            degree,
            residual: f64::NAN,
            off_grid_residual: f64::NAN,
            iterations: 0,
        })
    }

    /// `H(x) = o x` on `cells` cells.
    pub fn linear(orientation: Orientation, degree: i64, cells: usize) -> Self {
        let o = orientation.sign();
        let samples = (0..=cells).map(|i| o * i as f64 / cells as f64).collect();
        Self::from_samples(samples, orientation, degree).expect("at least one cell")
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn cells(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = x.floor();
        let n = self.cells();
        let pos = (x - k) * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let t = pos - i as f64;
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        let v = if t == 0.0 { a } else { a + t * (b - a) };
        v + k * self.orientation.sign()
    }

    /// Circle-valued `h(x) = H(x) mod 1`.
    pub fn angle(&self, x: f64) -> f64 {
        wrap(self.eval(x))
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        if self.cells() == other.cells() {
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            let m = 10 * self.cells().max(other.cells());
            (0..=m)
                .map(|i| {
                    let x = i as f64 / m as f64;
                    (self.eval(x) - other.eval(x)).abs()
                })
                .fold(0.0, f64::max)
        }
    }

    /// `sup |H(x) - o x|` over the grid.
    pub fn deviation_bound(&self) -> f64 {
        let o = self.orientation.sign();
        let n = self.cells() as f64;
        self.samples
            .iter()
            .enumerate()
            .map(|(i, h)| (h - o * i as f64 / n).abs())
            .fold(0.0, f64::max)
    }

    /// Monotone in the direction of `o` (non-strict).
    pub fn is_monotone(&self) -> bool {
        let o = self.orientation.sign();
        self.samples.windows(2).all(|w| o * (w[1] - w[0]) >= -1e-12)
    }

    /// Grid and off-grid residuals of `H F = d H` for `map`.
    pub fn measure_residuals(&self, map: &LiftedCircleMap) -> (f64, f64) {
        let d = map.degree() as f64;
        let n = self.cells();
        let at = |x: f64| (self.eval(map.eval(x)) - d * self.eval(x)).abs();
        let grid = (0..=n).map(|i| at(i as f64 / n as f64)).fold(0.0, f64::max);
        let m = 10 * n;
        let off = (0..m)
            .map(|i| at((i as f64 + 0.5) / m as f64))
            .fold(0.0, f64::max);
        (grid, off)
    }
}

/// One application of `T(H)(x) = H(F(x)) / d` on the grid of `h`.
pub fn contraction_step(h: &SemiconjugacyField1D, map: &LiftedCircleMap) -> Result<SemiconjugacyField1D> {
    if h.degree != map.degree() {
        return Err(Error::DegreeMismatch {
            left: h.degree,
            right: map.degree(),
        });
    }
    let d = map.degree() as f64;
    let n = h.cells();
    let samples = (0..=n)
        .map(|i| h.eval(map.eval(i as f64 / n as f64)) / d)
        .collect();
    let mut out = SemiconjugacyField1D::from_samples(samples, h.orientation, h.degree)?;
    out.iterations = h.iterations + 1;
    Ok(out)
}

/// Iterates `T` from `o x` until the step size certifies distance `tol` to
/// the fixed point.
pub fn solve_semiconjugacy(
    map: &LiftedCircleMap,
    orientation: Orientation,
    tol: f64,
    max_iter: usize,
) -> Result<SemiconjugacyField1D> {
    let d = map.degree().unsigned_abs() as f64;
    let stop = tol * (1.0 - 1.0 / d);
    let mut h = SemiconjugacyField1D::linear(orientation, map.degree(), map.cells());
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = contraction_step(&h, map)?;
        change = next.sup_distance(&h);
        h = next;
        if change <= stop {
            let (grid, off) = h.measure_residuals(map);
            h.residual = grid;
            h.off_grid_residual = off;
            return Ok(h);
        }
    }
    Err(Error::MaxIterExceeded {
        iterations: max_iter,
        change,
    })
}

/// Iteration budget that comfortably covers `tol` at contraction `1/|d|`.
pub fn default_max_iter(degree: i64, tol: f64) -> usize {
    let d = degree.unsigned_abs() as f64;
    ((tol.ln() / (1.0 / d).ln()).ceil().max(1.0) as usize) + 50
}

/// `H_F^+(x)`.
pub fn rotation_number(map: &LiftedCircleMap, x: f64) -> Result<f64> {
    let tol = 1e-12;
    let h = solve_semiconjugacy(map, Orientation::Preserving, tol, default_max_iter(map.degree(), tol))?;
    Ok(h.eval(x))
}

/// `F^n(x) / d^n`, an independent estimate with error `O(|d|^-n)`.
pub fn rotation_number_by_iteration(map: &LiftedCircleMap, x: f64, n: usize) -> f64 {
    let mut y = x;
    let mut scale = 1.0;
    let d = map.degree() as f64;
    for _ in 0..n {
        y = map.eval(y);
        scale *= d;
    }
    y / scale
}

/// A circle map commuting with `z -> z^d`: `t -> s t + j / m` with
/// `m = |d - 1|` and `s = -1` when reflecting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelfConjugacy {
    pub rotation_index: u64,
    pub reflect: bool,
    pub modulus: u64,
}

impl SelfConjugacy {
    pub fn identity(degree: i64) -> Self {
        Self {
            rotation_index: 0,
            reflect: false,
            modulus: (degree - 1).unsigned_abs(),
        }
    }

    pub fn apply(&self, t: f64) -> f64 {
        let s = if self.reflect { -1.0 } else { 1.0 };
        wrap(s * t + self.rotation_index as f64 / self.modulus as f64)
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Self) -> Self {
        let m = self.modulus;
        let j2 = if self.reflect {
            (m - other.rotation_index % m) % m
        } else {
            other.rotation_index % m
        };
        Self {
            rotation_index: (self.rotation_index + j2) % m,
            reflect: self.reflect ^ other.reflect,
            modulus: m,
        }
    }

    pub fn inverse(&self) -> Self {
        if self.reflect {
            *self
        } else {
            Self {
                rotation_index: (self.modulus - self.rotation_index) % self.modulus,
                ..*self
            }
        }
    }

    /// `max |c(d t) - d c(t)|` on the circle over `samples` points.
    pub fn commutation_defect(&self, degree: i64, samples: usize) -> f64 {
        let d = degree as f64;
        (0..samples)
            .map(|i| {
                let t = i as f64 / samples as f64;
                circle_dist(self.apply(wrap(d * t)), d * self.apply(t))
            })
            .fold(0.0, f64::max)
    }
}

/// The `2 |d - 1|` self-conjugacies of `z -> z^d`.
pub fn self_conjugacies(degree: i64) -> Result<Vec<SelfConjugacy>> {
    if degree.abs() <= 1 {
        return Err(Error::DegreeTooSmall { degree });
    }
    let m = (degree - 1).unsigned_abs();
    Ok([false, true]
        .into_iter()
        .flat_map(|reflect| {
            (0..m).map(move |j| SelfConjugacy {
                rotation_index: j,
                reflect,
                modulus: m,
            })
        })
        .collect())
}

/// The element `c` with `h1 = c h2`, by exhaustive search.
pub fn relate_semiconjugacies(
    h1: &SemiconjugacyField1D,
    h2: &SemiconjugacyField1D,
    tol: f64,
) -> Result<SelfConjugacy> {
    if h1.degree != h2.degree {
        return Err(Error::DegreeMismatch {
            left: h1.degree,
            right: h2.degree,
        });
    }
    let m = 10 * h1.cells().max(h2.cells());
    let xs: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let a: Vec<f64> = xs.iter().map(|&x| h1.angle(x)).collect();
    let b: Vec<f64> = xs.iter().map(|&x| h2.angle(x)).collect();
    let mut best = (f64::INFINITY, SelfConjugacy::identity(h1.degree));
    for c in self_conjugacies(h1.degree)? {
        let dist = a
            .iter()
            .zip(&b)
            .map(|(&p, &q)| circle_dist(p, c.apply(q)))
            .fold(0.0, f64::max);
        if dist < best.0 {
            best = (dist, c);
        }
    }
    if best.0 <= 10.0 * tol {
        Ok(best.1)
    } else {
        Err(Error::NoRelator { best: best.0 })
    }
}
