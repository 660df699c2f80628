//! Semiconjugacy lifts `H(x, y)` for annulus maps: on invariant product
//! bands, and on the whole annulus under bounded fiber displacement.

use serde::Serialize;

use crate::annulus::{displacement_bound, AnnulusMapLift};
use crate::error::{Error, Result};
use crate::semiconj1d::Orientation;
use crate::{circle_dist, wrap};

/// Samples of `H` on `[a, b] x [0, 1]`; `NaN` marks undefined samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandField2D {
    pub band: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `(nx + 1) x (ny + 1)`.
    samples: Vec<f64>,
    pub orientation: Orientation,
    pub residual: f64,
    pub off_grid_residual: f64,
    /// `sup |H(x, y) - o y|` over the defined samples.
    pub deviation_bound: f64,
    pub iterations: usize,
}

impl BandField2D {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(band: [f64; 2], nx: usize, ny: usize, orientation: Orientation, f: F) -> Self {
        let mut samples = Vec::with_capacity((nx + 1) * (ny + 1));
        for i in 0..=nx {
            let x = band[0] + (band[1] - band[0]) * i as f64 / nx as f64;
            for j in 0..ny {
                samples.push(f(x, j as f64 / ny as f64));
            }
            let first = samples[samples.len() - ny];
            samples.push(first + orientation.sign());
        }
        let mut out = Self {
            band,
            nx,
            ny,
            samples,
            orientation,
            residual: f64::NAN,
            off_grid_residual: f64::NAN,
            deviation_bound: 0.0,
            iterations: 0,
        };
        out.deviation_bound = out.measure_deviation();
        out
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.band[0] + (self.band[1] - self.band[0]) * i as f64 / self.nx as f64
    }

    pub fn sample(&self, i: usize, j: usize) -> f64 {
        self.samples[i * (self.ny + 1) + j]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    fn measure_deviation(&self) -> f64 {
        let o = self.orientation.sign();
        let mut m: f64 = 0.0;
        for i in 0..=self.nx {
            for j in 0..=self.ny {
                let v = self.sample(i, j);
                if v.is_finite() {
                    m = m.max((v - o * j as f64 / self.ny as f64).abs());
                }
            }
        }
        m
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.band[0] && x <= self.band[1]
    }

    /// Bilinear value; `NaN` outside the band or on undefined cells.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if !self.contains(x) {
            return f64::NAN;
        }
        let k = y.floor();
        let px = ((x - self.band[0]) / (self.band[1] - self.band[0]) * self.nx as f64).clamp(0.0, self.nx as f64);
        let py = (y - k) * self.ny as f64;
        let i = (px.floor() as usize).min(self.nx - 1);
        let j = (py.floor() as usize).min(self.ny - 1);
        let (tx, ty) = (px - i as f64, py - j as f64);
        let v00 = self.sample(i, j);
        let v01 = self.sample(i, j + 1);
        let lo = if ty == 0.0 { v00 } else { v00 + ty * (v01 - v00) };
        let v = if tx == 0.0 {
            lo
        } else {
            let v10 = self.sample(i + 1, j);
            let v11 = self.sample(i + 1, j + 1);
            let hi = if ty == 0.0 { v10 } else { v10 + ty * (v11 - v10) };
            lo + tx * (hi - lo)
        };
        v + k * self.orientation.sign()
    }

    /// Circle-valued `h = H mod 1`.
    pub fn angle(&self, x: f64, y: f64) -> f64 {
        wrap(self.eval(x, y))
    }

    /// Residuals of `H F = d H` at grid points and at cell centres.
    pub fn measure_residuals(&self, map: &AnnulusMapLift) -> (f64, f64) {
        let d = map.degree() as f64;
        let at = |x: f64, y: f64| {
            let (x1, y1) = (map.base(x), map.fiber_eval(x, y));
            (self.eval(x1, y1) - d * self.eval(x, y)).abs()
        };
        let (mut grid, mut off): (f64, f64) = (0.0, 0.0);
        for i in 0..=self.nx {
            let x = self.x_at(i);
            for j in 0..self.ny {
                let r = at(x, j as f64 / self.ny as f64);
                if r.is_finite() {
                    grid = grid.max(r);
                }
                if i < self.nx {
                    let xc = 0.5 * (x + self.x_at(i + 1));
                    let r = at(xc, (j as f64 + 0.5) / self.ny as f64);
                    if r.is_finite() {
                        off = off.max(r);
                    }
                }
            }
        }
        (grid, off)
    }

    fn sup_change(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn finish(&mut self, map: &AnnulusMapLift) {
        let (g, o) = self.measure_residuals(map);
        self.residual = g;
        self.off_grid_residual = o;
        self.deviation_bound = self.measure_deviation();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandGrid {
    pub nx: usize,
    pub ny: usize,
}

impl Default for BandGrid {
    fn default() -> Self {
        Self { nx: 64, ny: 512 }
    }
}

fn check_band_invariant(map: &AnnulusMapLift, band: [f64; 2], nx: usize) -> Result<()> {
    let m = 4 * nx;
    for i in 0..=m {
        let x = band[0] + (band[1] - band[0]) * i as f64 / m as f64;
        let image = map.base(x);
        if !(image >= band[0] && image <= band[1]) {
            return Err(Error::BandNotInvariant { x, image });
        }
    }
    Ok(())
}

fn iterate_operator<C>(
    map: &AnnulusMapLift,
    mut h: BandField2D,
    tol: f64,
    max_iter: usize,
    closure: C,
) -> Result<BandField2D>
where
    C: Fn(&BandField2D, f64, f64) -> f64,
{
    let d = map.degree() as f64;
    let stop = tol * (1.0 - 1.0 / d.abs());
    for _ in 0..max_iter {
        let prev = &h;
        let next = BandField2D::from_fn(h.band, h.nx, h.ny, h.orientation, |x, y| {
            let (x1, y1) = (map.base(x), map.fiber_eval(x, y));
            let v = if prev.contains(x1) { prev.eval(x1, y1) } else { closure(prev, x1, y1) };
            v / d
        });
        let change = next.sup_change(&h);
        let iterations = h.iterations + 1;
        h = next;
        h.iterations = iterations;
        if change <= stop {
            h.finish(map);
            return Ok(h);
        }
    }
    Err(Error::MaxIterExceeded {
        iterations: max_iter,
        change: f64::NAN,
    })
}

/// Fixed point of `T(H) = H F / d` on an invariant band.
pub fn solve_band_semiconjugacy(
    map: &AnnulusMapLift,
    band: [f64; 2],
    tol: f64,
    max_iter: usize,
    grid: BandGrid,
) -> Result<BandField2D> {
    if !(0.0 < band[0] && band[0] < band[1] && band[1] < 1.0) {
        return Err(Error::BadParams(format!("band {band:?} is not inside (0, 1)")));
    }
    check_band_invariant(map, band, grid.nx)?;
    let h0 = BandField2D::from_fn(band, grid.nx, grid.ny, Orientation::Preserving, |_, y| y);
    iterate_operator(map, h0, tol, max_iter, |_, _, _| f64::NAN)
}

/// Result of the bounded-displacement solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedSolution {
    pub field: BandField2D,
    /// Sup change on the innermost band between the last two truncations.
    pub interior_change: f64,
    pub truncations: Vec<[f64; 2]>,
}

/// Fixed point of `T` on fields with `sup |H - y| < inf`, computed on
/// widening truncations `[m, 1 - m]`. Where `F` leaves a truncation, `H F`
/// is replaced by `y' + mean(H - y)`.
pub fn solve_bounded_semiconjugacy(map: &AnnulusMapLift, tol: f64, max_iter: usize, grid: BandGrid) -> Result<BoundedSolution> {
    let disp = displacement_bound(map, [0.1, 0.9], 32);
    if disp.divergent {
        return Err(Error::DisplacementDiverges);
    }
    let closure = |h: &BandField2D, _x: f64, y: f64| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..=h.nx {
            for j in 0..h.ny {
                let v = h.sample(i, j);
                if v.is_finite() {
                    sum += v - j as f64 / h.ny as f64;
                    count += 1;
                }
            }
        }
        y + sum / count.max(1) as f64
    };
    let inner = [0.1, 0.9];
    let mut prev: Option<BandField2D> = None;
    let mut truncations = Vec::new();
    let mut margin = 0.1;
    let mut last_change = f64::INFINITY;
    for _ in 0..8 {
        let band = [margin, 1.0 - margin];
        truncations.push(band);
        let h0 = BandField2D::from_fn(band, grid.nx, grid.ny, Orientation::Preserving, |_, y| y);
        let h = iterate_operator(map, h0, tol, max_iter, closure)?;
        if let Some(p) = &prev {
            let mut change: f64 = 0.0;
            for i in 0..=32 {
                let x = inner[0] + (inner[1] - inner[0]) * i as f64 / 32.0;
                for j in 0..64 {
                    let y = j as f64 / 64.0;
                    change = change.max((h.eval(x, y) - p.eval(x, y)).abs());
                }
            }
            last_change = change;
            if change <= tol {
                return Ok(BoundedSolution {
                    field: h,
                    interior_change: change,
                    truncations,
                });
            }
        }
        prev = Some(h);
        margin *= 0.5;
    }
    Err(Error::MaxIterExceeded {
        iterations: truncations.len(),
        change: last_change,
    })
}

/// True when `h(x_level, .)` leaves no circular gap wider than `max_gap`.
pub fn check_fiber_surjectivity(h: &BandField2D, x_level: f64, max_gap: f64) -> bool {
    let m = 4 * h.ny;
    let mut vals: Vec<f64> = Vec::with_capacity(m);
    for j in 0..m {
        let v = h.eval(x_level, j as f64 / m as f64);
        if !v.is_finite() {
            return false;
        }
        vals.push(wrap(v));
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let mut gap = vals[0] + 1.0 - vals[vals.len() - 1];
    for w in vals.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap <= max_gap
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConnectorCheck {
    Holds,
    /// No sample of this level comes within tolerance of the angle.
    MissesLevel { x: f64, distance: f64 },
    /// The field is undefined somewhere on this level.
    DomainGap { x: f64 },
}

impl ConnectorCheck {
    pub fn holds(&self) -> bool {
        matches!(self, ConnectorCheck::Holds)
    }
}

/// Whether `h^{-1}(z)` meets every grid level of the band.
pub fn check_fiber_connector(h: &BandField2D, z: f64, tol: f64) -> ConnectorCheck {
    for i in 0..=h.nx {
        let x = h.x_at(i);
        let mut best = f64::INFINITY;
        for j in 0..h.ny {
            let (a, b) = (h.sample(i, j), h.sample(i, j + 1));
            if !(a.is_finite() && b.is_finite()) {
                return ConnectorCheck::DomainGap { x };
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if (lo - z).floor() < (hi - z).floor() || (lo - z).fract() == 0.0 {
                best = 0.0;
                break;
            }
            best = best.min(circle_dist(lo, z)).min(circle_dist(hi, z));
        }
        if best > tol {
            return ConnectorCheck::MissesLevel { x, distance: best };
        }
    }
    ConnectorCheck::Holds
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointComparison {
    pub equal: bool,
    /// Integer `l` with `F(q - (0, l)) = q - (0, l)` for the lift fixing `p`.
    pub lift_witness: Option<i64>,
    /// The lift criterion disagrees with the equality test.
    pub inconclusive: bool,
}

/// Compares `h(p)` and `h(q)` for fixed points `p`, `q`, with the lift test
/// as a cross-check.
pub fn fixed_point_h_equality(
    map: &AnnulusMapLift,
    h: &BandField2D,
    p: (f64, f64),
    q: (f64, f64),
    tol: f64,
) -> Result<FixedPointComparison> {
    let defect = |(x, y): (f64, f64)| {
        let dx = (map.base(x) - x).abs();
        let dy = circle_dist(map.fiber_eval(x, y), y);
        dx.max(dy)
    };
    for pt in [p, q] {
        let e = defect(pt);
        if e > tol {
            return Err(Error::NotFixed {
                x: pt.0,
                y: pt.1,
                defect: e,
            });
        }
    }
    let equal = circle_dist(h.eval(p.0, p.1), h.eval(q.0, q.1)) <= tol;
    let d = map.degree() as f64;
    let kp = (map.fiber_eval(p.0, p.1) - p.1).round();
    let l = (map.fiber_eval(q.0, q.1) - q.1 - kp) / (d - 1.0);
    let bound = 2.0 * (h.deviation_bound + 1.0);
    let li = l.round();
    let witness = if (l - li).abs() * (d - 1.0).abs() <= 10.0 * tol && li.abs() <= bound {
        Some(li as i64)
    } else {
        None
    };
    Ok(FixedPointComparison {
        equal,
        lift_witness: if equal { witness } else { None },
        inconclusive: equal != witness.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annulus::{BaseSpec, Fiber, FiberSpec, TwistSpec};
    use crate::circle::{CircleFamily, LiftedCircleMap};
    use crate::semiconj1d;
    use std::sync::Arc;

    fn twisted_identity() -> AnnulusMapLift {
        AnnulusMapLift::skew(BaseSpec::identity(), FiberSpec::twisted(2, TwistSpec::Linear { slope: 0.1, intercept: 0.0 })).unwrap()
    }

    #[test]
    fn product_band() {
        let h = solve_band_semiconjugacy(&AnnulusMapLift::product(2), [0.2, 0.8], 1e-12, 100, BandGrid { nx: 16, ny: 64 }).unwrap();
        assert!(h.residual < 1e-10);
        assert!(h.deviation_bound < 1e-12);
    }

    #[test]
    fn twisted_band_matches_ansatz() {
        let h = solve_band_semiconjugacy(&twisted_identity(), [0.2, 0.8], 1e-10, 100, BandGrid { nx: 32, ny: 128 }).unwrap();
        for i in 0..=20 {
            let x = 0.2 + 0.03 * i as f64;
            for j in 0..20 {
                let y = j as f64 / 20.0;
                assert!((h.eval(x, y) - (y + 0.1 * x)).abs() < 1e-8);
            }
        }
        assert!(check_fiber_surjectivity(&h, 0.5, 0.01));
        assert!(check_fiber_connector(&h, 0.0, 1e-9).holds());
    }

    #[test]
    fn contracting_base_iterations() {
        let map = AnnulusMapLift::skew(BaseSpec::contracting(0.9), FiberSpec::power(2)).unwrap();
        let tol = 1e-8;
        let h = solve_band_semiconjugacy(&map, [0.2, 0.8], tol, 200, BandGrid { nx: 16, ny: 64 }).unwrap();
        assert!(h.residual <= tol);
        assert!(h.iterations <= (1.0 / tol).log2().ceil() as usize + 5);
    }

    #[test]
    fn non_invariant_band() {
        let map = AnnulusMapLift::skew(BaseSpec::Power { exponent: 2.0 }, FiberSpec::power(2)).unwrap();
        assert!(matches!(
            solve_band_semiconjugacy(&map, [0.2, 0.8], 1e-8, 100, BandGrid::default()),
            Err(Error::BandNotInvariant { .. })
        ));
    }

    #[test]
    fn bounded_solver_examples() {
        let sq = AnnulusMapLift::skew(BaseSpec::Power { exponent: 2.0 }, FiberSpec::power(2)).unwrap();
        let s = solve_bounded_semiconjugacy(&sq, 1e-9, 200, BandGrid { nx: 16, ny: 32 }).unwrap();
        assert!(s.field.deviation_bound < 1e-9);
        let c = AnnulusMapLift::skew(BaseSpec::Power { exponent: 2.0 }, FiberSpec::twisted(2, TwistSpec::Constant { value: 0.3 })).unwrap();
        let s = solve_bounded_semiconjugacy(&c, 1e-9, 200, BandGrid { nx: 16, ny: 32 }).unwrap();
        assert!((s.field.eval(0.5, 0.25) - 0.55).abs() < 1e-8);
        let pole = AnnulusMapLift::skew(BaseSpec::Affine { slope: 0.5, offset: 0.5 }, FiberSpec::twisted(2, TwistSpec::Pole { coef: 1.0 })).unwrap();
        assert_eq!(
            solve_bounded_semiconjugacy(&pole, 1e-9, 200, BandGrid::default()).unwrap_err(),
            Error::DisplacementDiverges
        );
    }

    #[test]
    fn surjectivity_and_connector_failures() {
        let flat = BandField2D::from_fn([0.2, 0.8], 8, 32, Orientation::Preserving, |_, _| 0.3);
        assert!(!check_fiber_surjectivity(&flat, 0.5, 0.01));
        let half = BandField2D::from_fn([0.2, 0.8], 8, 32, Orientation::Preserving, |x, y| if x < 0.5 { y } else { f64::NAN });
        assert!(matches!(check_fiber_connector(&half, 0.25, 1e-9), ConnectorCheck::DomainGap { .. }));
        let id = BandField2D::from_fn([0.2, 0.8], 8, 32, Orientation::Preserving, |_, y| y);
        assert!(check_fiber_connector(&id, 0.25, 1e-12).holds());
    }

    #[test]
    fn fixed_point_equality() {
        let p2 = AnnulusMapLift::product(2);
        let h = solve_band_semiconjugacy(&p2, [0.2, 0.8], 1e-10, 100, BandGrid { nx: 8, ny: 64 }).unwrap();
        let r = fixed_point_h_equality(&p2, &h, (0.5, 0.0), (0.5, 0.0), 1e-9).unwrap();
        assert!(r.equal && r.lift_witness == Some(0) && !r.inconclusive);
        assert!(matches!(
            fixed_point_h_equality(&p2, &h, (0.5, 0.0), (0.5, 1.0 / 3.0), 1e-9),
            Err(Error::NotFixed { .. })
        ));

        let mut spec = crate::classify::BlowUpSpec::new(
            2,
            vec![crate::classify::Insertion {
                angle: crate::classify::BaseAngle::Value(0.0),
                length: 0.1,
                kind: crate::classify::InsertKind::NorthSouth,
            }],
        );
        spec.offset = 0.45;
        let circle = LiftedCircleMap::from_family(&CircleFamily::Blowup(spec), 1024).unwrap();
        let fixed = crate::circle::find_periodic_points(&circle, 1, 1e-13).unwrap();
        let map = AnnulusMapLift::new(BaseSpec::identity(), Fiber::Circle(Arc::new(circle.clone()))).unwrap();
        let h = solve_band_semiconjugacy(&map, [0.2, 0.8], 1e-11, 200, BandGrid { nx: 4, ny: 1024 }).unwrap();
        let (p, q) = (fixed[0].angle, fixed[2].angle);
        assert!((p - 0.45).abs() < 2e-3 && (q - 0.55).abs() < 2e-3);
        // interpolation error on the collapsed interval is of order one cell
        let r = fixed_point_h_equality(&map, &h, (0.5, p), (0.5, q), 1e-3).unwrap();
        assert!(r.equal, "{r:?}");
        assert!(r.lift_witness.is_some());
        let r = fixed_point_h_equality(&map, &h, (0.5, p), (0.5, fixed[1].angle), 1e-3).unwrap();
        assert!(r.equal);

        // agreement with the 1-D field on each fiber
        let h1 = semiconj1d::solve_semiconjugacy(&circle, Orientation::Preserving, 1e-11, 200).unwrap();
        for j in 0..100 {
            let y = j as f64 / 100.0;
            assert!((h.eval(0.3, y) - h1.eval(y)).abs() < 2e-11);
        }
    }
}
