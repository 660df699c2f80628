//! A Whitney-small perturbation of `p2(z) = z |z|` (base `x -> x^2`, fiber
//! `t -> 2t`) that is injective on an open forward-invariant sector, so it
//! cannot be conjugate to `p2`.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::annulus::{AnnulusMapLift, BaseSpec, Fiber};
use crate::error::{Error, Result};

/// Increasing odd piecewise-linear map with knots `(rho, rho2)` and
/// `(2 rho, 4 rho)`, equal to `2t` beyond `2 rho`.
pub fn bump_phi(rho: f64, rho2: f64, t: f64) -> Result<f64> {
    if !(rho > 0.0 && rho2 > 0.0) || rho2 > rho {
        return Err(Error::BadParams(format!("need 0 < rho' <= rho, got rho={rho}, rho'={rho2}")));
    }
    Ok(phi_unchecked(rho, rho2, t))
}

fn phi_unchecked(rho: f64, rho2: f64, t: f64) -> f64 {
    let a = t.abs();
    let v = if a <= rho {
        a * rho2 / rho
    } else if a <= 2.0 * rho {
        rho2 + (a - rho) * (4.0 * rho - rho2) / rho
    } else {
        return 2.0 * t;
    };
    v.copysign(t)
}

/// Radial tolerance `eps(x)` on `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSpec {
    Constant { value: f64 },
    /// `coef x^exponent`
    Power { coef: f64, exponent: f64 },
    /// `scale x (1 - x)`, vanishing at both ends.
    Boundary { scale: f64 },
}

impl EpsilonSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            EpsilonSpec::Constant { value } => *value,
            EpsilonSpec::Power { coef, exponent } => coef * x.powf(*exponent),
            EpsilonSpec::Boundary { scale } => scale * x * (1.0 - x),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            EpsilonSpec::Constant { value } => *value > 0.0,
            EpsilonSpec::Power { coef, exponent } => *coef > 0.0 && exponent.is_finite(),
            EpsilonSpec::Boundary { scale } => *scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadParams("epsilon must be positive".into()))
        }
    }
}

const SAFETY: f64 = 0.9;
const RHO_CAP: f64 = 0.25;
const INNER_BANDS: usize = 9;
const OUTER_BANDS: usize = 50;

/// `rho` on `(0, 1)` with `2 rho < eps` and `rho(x^2) < rho(x)` for `x <= 1/2`.
///
/// On `(0, 1/2]` the grid variable is `s = log2(-log2 x)`, so each unit of
/// `s` is one fundamental domain `[x^2, x]` of squaring. Moving outward band
/// by band, `mu` is a running minimum of `eps / 2` that looks one node ahead,
/// and `rho = 0.9 mu (1 + x) / 2` is strictly increasing there.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoProfile {
    per_band: usize,
    inner: Vec<f64>,
    outer: Vec<f64>,
}

fn weight(x: f64) -> f64 {
    0.5 + 0.5 * x
}

fn running_min(eps: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(eps.len());
    let mut m = RHO_CAP / SAFETY;
    for i in 0..eps.len() {
        let ahead = eps[(i + 1).min(eps.len() - 1)];
        m = m.min(0.5 * eps[i]).min(0.5 * ahead);
        out.push(m);
    }
    out
}

impl RhoProfile {
    fn inner_x(s: f64) -> f64 {
        (-(s.exp2())).exp2()
    }

    fn outer_x(s: f64) -> f64 {
        1.0 - (-(1.0 + s)).exp2()
    }

    fn lookup(table: &[f64], s: f64, per_band: usize) -> f64 {
        let pos = (s * per_band as f64).max(0.0);
        let n = table.len() - 1;
        if pos >= n as f64 {
            return table[n];
        }
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        table[i] + t * (table[i + 1] - table[i])
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.5 {
            let s = (-(x.log2())).log2();
            SAFETY * Self::lookup(&self.inner, s, self.per_band) * weight(x)
        } else {
            let s = -((1.0 - x).log2()) - 1.0;
            SAFETY * Self::lookup(&self.outer, s, self.per_band) * weight(0.5)
        }
    }
}

pub fn radial_rho(eps: &EpsilonSpec, per_band: usize) -> Result<RhoProfile> {
    eps.validate()?;
    let per_band = per_band.max(4);
    let inner_eps: Vec<f64> = (0..=INNER_BANDS * per_band)
        .map(|i| eps.eval(RhoProfile::inner_x(i as f64 / per_band as f64)))
        .collect();
    let inner = running_min(&inner_eps);
    let mut outer_eps: Vec<f64> = (0..=OUTER_BANDS * per_band)
        .map(|i| eps.eval(RhoProfile::outer_x(i as f64 / per_band as f64)))
        .collect();
    outer_eps[0] = outer_eps[0].min(2.0 * inner[0]);
    let outer = running_min(&outer_eps);
    Ok(RhoProfile { per_band, inner, outer })
}

/// Fiber `y -> phi_{rho(x), rho(x^2)}(2 pi y) / (2 pi)` near `y = 0`, and
/// `2y` elsewhere.
#[derive(Debug, Clone)]
pub struct BumpFiber {
    rho: Arc<RhoProfile>,
}

impl BumpFiber {
    /// Knots in fiber units at `x`.
    pub fn knots(&self, x: f64) -> (f64, f64) {
        let r = self.rho.eval(x);
        let r2 = self.rho.eval(x * x).min(r);
        (r / TAU, r2 / TAU)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (r, r2) = self.knots(x);
        let k = y.round();
        let c = y - k;
        if c.abs() > 2.0 * r {
            return 2.0 * y;
        }
        phi_unchecked(r, r2, c) + 2.0 * k
    }
}

pub fn perturb_p2(eps: &EpsilonSpec, per_band: usize) -> Result<(AnnulusMapLift, Arc<RhoProfile>)> {
    let rho = Arc::new(radial_rho(eps, per_band)?);
    let fiber = Fiber::Bump(BumpFiber { rho: rho.clone() });
    let map = AnnulusMapLift::new(BaseSpec::Power { exponent: 2.0 }, fiber)?;
    Ok((map, rho))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectivityCertificate {
    /// Smallest slope of `phi` over sampled fibers of the sector.
    pub min_fiber_slope: f64,
    /// Largest angular width of the image of a sector fiber.
    pub max_image_arc: f64,
    /// `x -> x^2` is strictly increasing on `(0, 1/2)`.
    pub base_injective: bool,
    /// No two sampled sector points share an image.
    pub sampled_pairs_separated: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    /// `sup x^2 |e^{i phi(t)} - e^{2it}| / eps(x)` over the samples.
    pub sup_ratio: f64,
    pub ratio_samples: usize,
    pub max_two_rho_over_eps: f64,
    pub nested_rho: bool,
    /// Fraction of sampled sector points whose image stays in the sector.
    pub invariant_fraction: f64,
    pub invariance_samples: usize,
    pub injectivity: InjectivityCertificate,
    /// Angular width of the disc used for the obstruction.
    pub width: f64,
    /// Iterates after which `p2` stops being injective on that disc.
    pub noninjective_after: u32,
    /// The skew product maps each circle `|z| = x` to `|z| = x^2`.
    pub preserves_circle_foliation: bool,
}

fn sample_x(i: usize, n: usize) -> f64 {
    // half the points log-spaced toward 0, half uniform
    let u = (i as f64 + 0.5) / n as f64;
    if i % 2 == 0 {
        (-12.0 * u * std::f64::consts::LN_10).exp()
    } else {
        u
    }
}

/// Checks each inequality that makes `g` a non-conjugate perturbation.
pub fn verify_perturbation(eps: &EpsilonSpec, rho: &RhoProfile, samples: usize, width: f64) -> Result<PerturbationReport> {
    if !(width > 0.0 && width < TAU) {
        return Err(Error::BadParams("width must lie in (0, 2 pi)".into()));
    }
    let nx = ((samples as f64).sqrt().ceil() as usize).max(2);
    let nt = samples.div_ceil(nx).max(2);
    let phi = |x: f64, t: f64| {
        let r = rho.eval(x);
        phi_unchecked(r, rho.eval(x * x).min(r), t)
    };

    let mut sup_ratio: f64 = 0.0;
    let mut two_rho: f64 = 0.0;
    for i in 0..nx {
        let x = sample_x(i, nx);
        let r = rho.eval(x);
        let e = eps.eval(x);
        two_rho = two_rho.max(2.0 * r / e);
        for j in 0..nt {
            let t = -3.0 * r + 6.0 * r * (j as f64 + 0.5) / nt as f64;
            let diff = x * x * 2.0 * (0.5 * (phi(x, t) - 2.0 * t)).sin().abs();
            sup_ratio = sup_ratio.max(diff / e);
        }
    }

    let nested_rho = (1..=1000).all(|i| {
        let x = 0.5 * i as f64 / 1000.0;
        rho.eval(x * x) < rho.eval(x)
    });

    let (mut inside, mut total) = (0usize, 0usize);
    let mut min_slope = f64::INFINITY;
    let mut max_arc: f64 = 0.0;
    let mut separated = true;
    let mut images: Vec<(f64, f64)> = Vec::new();
    for i in 0..nx {
        let x = 0.5 * (i as f64 + 0.5) / nx as f64;
        let r = rho.eval(x);
        let r2 = rho.eval(x * x).min(r);
        min_slope = min_slope.min(r2 / r).min((4.0 * r - r2) / r);
        max_arc = max_arc.max(2.0 * r2);
        let mut prev = f64::NEG_INFINITY;
        for j in 0..nt {
            let t = r * (2.0 * (j as f64 + 0.5) / nt as f64 - 1.0);
            let (x1, t1) = (x * x, phi(x, t));
            total += 1;
            if x1 < 0.5 && t1.abs() < rho.eval(x1) {
                inside += 1;
            }
            if t1 <= prev {
                separated = false;
            }
            prev = t1;
            images.push((x1, t1));
        }
    }
    images.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if images.windows(2).any(|w| w[0] == w[1]) {
        separated = false;
    }
    let base_injective = (1..nx).all(|i| {
        let (a, b) = (0.5 * (i as f64 - 0.5) / nx as f64, 0.5 * (i as f64 + 0.5) / nx as f64);
        a * a < b * b
    });
    let holds = min_slope > 0.0 && max_arc < TAU && base_injective && separated;

    let noninjective_after = (TAU / width).log2().ceil() as u32;
    debug_assert!({
        let mut n = 0;
        let mut w = width;
        while w <= TAU {
            w *= 2.0;
            n += 1;
        }
        n == noninjective_after
    });

    Ok(PerturbationReport {
        sup_ratio,
        ratio_samples: nx * nt,
        max_two_rho_over_eps: two_rho,
        nested_rho,
        invariant_fraction: inside as f64 / total as f64,
        invariance_samples: total,
        injectivity: InjectivityCertificate {
            min_fiber_slope: min_slope,
            max_image_arc: max_arc,
            base_injective,
            sampled_pairs_separated: separated,
            holds,
        },
        width,
        noninjective_after,
        preserves_circle_foliation: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phi_examples() {
        assert!((bump_phi(0.1, 0.05, 0.1).unwrap() - 0.05).abs() < 1e-15);
        assert!((bump_phi(0.1, 0.05, 0.3).unwrap() - 0.6).abs() < 1e-15);
        let dev = (0..=10_000)
            .map(|i| {
                let t = -0.4 + 0.8 * i as f64 / 10_000.0;
                (bump_phi(0.1, 0.05, t).unwrap() - 2.0 * t).abs()
            })
            .fold(0.0, f64::max);
        assert!((dev - 0.15).abs() < 1e-12);
        assert!(bump_phi(0.1, 0.2, 0.0).is_err());
        assert!(bump_phi(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rho_examples() {
        let eps = EpsilonSpec::Constant { value: 0.1 };
        let rho = radial_rho(&eps, 64).unwrap();
        assert!(rho.eval(0.25) < rho.eval(0.5));
        for i in 0..100_000 {
            let x = (i as f64 + 0.5) / 100_000.0;
            assert!(2.0 * rho.eval(x) < 0.1);
        }
        for i in 1..=1000 {
            let x = 0.5 * i as f64 / 1000.0;
            assert!(rho.eval(x * x) < rho.eval(x));
        }
    }

    #[test]
    fn perturbation_matches_p2_off_sector() {
        let eps = EpsilonSpec::Constant { value: 0.1 };
        let (g, _) = perturb_p2(&eps, 64).unwrap();
        assert_eq!(g.degree(), 2);
        let p2 = AnnulusMapLift::skew(BaseSpec::Power { exponent: 2.0 }, crate::annulus::FiberSpec::power(2)).unwrap();
        assert_eq!(g.eval(0.3, 0.0).unwrap(), (0.09, 0.0));
        let Fiber::Bump(b) = g.fiber() else { unreachable!() };
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let (r, _) = b.knots(x);
            let y = 3.0 * r;
            assert_eq!(g.eval(x, y).unwrap(), p2.eval(x, y).unwrap());
            for j in 0..64 {
                let y = j as f64 / 64.0;
                if (y - y.round()).abs() > 2.0 * r {
                    assert_eq!(g.fiber_eval(x, y).to_bits(), p2.fiber_eval(x, y).to_bits());
                }
            }
        }
    }

    #[test]
    fn verification_report() {
        let eps = EpsilonSpec::Constant { value: 0.1 };
        let rho = radial_rho(&eps, 64).unwrap();
        let r = verify_perturbation(&eps, &rho, 100_000, 0.01).unwrap();
        assert!(r.sup_ratio < 1.0);
        assert_eq!(r.invariant_fraction, 1.0);
        assert!(r.injectivity.holds);
        assert_eq!(r.noninjective_after, 10);
        assert!(r.nested_rho);
    }

    #[test]
    fn whitney_epsilon() {
        for eps in [EpsilonSpec::Boundary { scale: 0.5 }, EpsilonSpec::Power { coef: 0.2, exponent: 1.5 }] {
            let rho = radial_rho(&eps, 64).unwrap();
            let r = verify_perturbation(&eps, &rho, 40_000, 0.5).unwrap();
            assert!(r.sup_ratio < 1.0, "{eps:?}: {}", r.sup_ratio);
            assert!(r.max_two_rho_over_eps < 1.0);
            assert_eq!(r.invariant_fraction, 1.0);
            assert!(r.nested_rho);
        }
    }

    proptest! {
        #[test]
        fn phi_is_odd_increasing(rho in 1e-4f64..1.0, frac in 1e-3f64..=1.0, t in -3.0f64..3.0, dt in 1e-9f64..0.1) {
            let r2 = rho * frac;
            let v = bump_phi(rho, r2, t).unwrap();
            prop_assert_eq!(bump_phi(rho, r2, -t).unwrap(), -v);
            prop_assert!(bump_phi(rho, r2, t + dt).unwrap() > v);
            prop_assert!((v - 2.0 * t).abs() <= 2.0 * rho - r2 + 1e-12);
            if t.abs() > 2.0 * rho {
                prop_assert_eq!(v, 2.0 * t);
            }
        }
    }
}
