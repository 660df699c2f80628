//! Skew-product coverings of the open annulus, lifted to `(0, 1) x R` as
//! `F(x, y) = (base(x), g_x(y))` with `g_x(y + 1) = g_x(y) + d`.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::circle::LiftedCircleMap;

use crate::error::{Error, Result};
use crate::stability::BumpFiber;

/// Base map of `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    /// `slope x + offset`
    Affine { slope: f64, offset: f64 },
    /// `x^exponent`
    Power { exponent: f64 },
    /// Values on a uniform grid of `[0, 1]`, linearly interpolated.
    Samples { values: Vec<f64> },
}

impl BaseSpec {
    pub fn identity() -> Self {
        BaseSpec::Affine { slope: 1.0, offset: 0.0 }
    }

    /// `0.5 + lambda (x - 0.5)`
    pub fn contracting(lambda: f64) -> Self {
        BaseSpec::Affine {
            slope: lambda,
            offset: 0.5 * (1.0 - lambda),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BaseSpec::Affine { slope, offset } => slope * x + offset,
            BaseSpec::Power { exponent } => x.powf(*exponent),
            BaseSpec::Samples { values } => interp(values, x),
        }
    }
}

fn interp(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let pos = (x.clamp(0.0, 1.0)) * n as f64;
    let i = (pos.floor() as usize).min(n - 1);
    let t = pos - i as f64;
    values[i] + t * (values[i + 1] - values[i])
}

/// Additive twist `tau(x)` of the fiber map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TwistSpec {
    Constant { value: f64 },
    /// `slope x + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `coef / (1 - x)`
    Pole { coef: f64 },
    Samples { values: Vec<f64> },
}

impl Default for TwistSpec {
    fn default() -> Self {
        TwistSpec::Constant { value: 0.0 }
    }
}

impl TwistSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TwistSpec::Constant { value } => *value,
            TwistSpec::Linear { slope, intercept } => slope * x + intercept,
            TwistSpec::Pole { coef } => coef / (1.0 - x),
            TwistSpec::Samples { values } => interp(values, x),
        }
    }
}

/// `g_x(y) = slope y + amplitude sin(2 pi y) + twist(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub slope: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub twist: TwistSpec,
}

impl FiberSpec {
    pub fn power(d: i64) -> Self {
        Self {
            slope: d as f64,
            amplitude: 0.0,
            twist: TwistSpec::default(),
        }
    }

    pub fn twisted(d: i64, twist: TwistSpec) -> Self {
        Self {
            slope: d as f64,
            amplitude: 0.0,
            twist,
        }
    }
}

/// Config form of an annulus map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusSpec {
    pub base: BaseSpec,
    pub fiber: FiberSpec,
    /// Checked against the fiber when present.
    #[serde(default)]
    pub degree: Option<i64>,
    #[serde(default)]
    pub band: Option<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub enum Fiber {
    Skew(FiberSpec),
    Bump(BumpFiber),
    /// The same circle-map lift over every `x`.
    Circle(Arc<LiftedCircleMap>),
}

impl Fiber {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Fiber::Skew(f) => f.slope * y + f.amplitude * (TAU * y).sin() + f.twist.eval(x),
            Fiber::Bump(b) => b.eval(x, y),
            Fiber::Circle(m) => m.eval(y),
        }
    }
}

/// Validated skew-product lift.
#[derive(Debug, Clone)]
pub struct AnnulusMapLift {
    base: BaseSpec,
    fiber: Fiber,
    degree: i64,
    domain_band: Option<[f64; 2]>,
}

const CHECK_X: usize = 256;
const CHECK_Y: usize = 256;

impl AnnulusMapLift {
    pub fn new(base: BaseSpec, fiber: Fiber) -> Result<Self> {
        let xs = (0..CHECK_X).map(|i| (i as f64 + 0.5) / CHECK_X as f64);
        for x in xs.clone() {
            let v = base.eval(x);
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::BaseEscapes { x });
            }
        }
        let span = fiber.eval(0.5, 1.0) - fiber.eval(0.5, 0.0);
        let degree = span.round();
        if (span - degree).abs() > 1e-9 {
            return Err(Error::NonIntegerDegree { value: span });
        }
        let degree = degree as i64;
        if degree.abs() <= 1 {
            return Err(Error::DegreeTooSmall { degree });
        }
        let s = degree.signum() as f64;
        for x in xs {
            let span = fiber.eval(x, 1.0) - fiber.eval(x, 0.0);
            if (span - degree as f64).abs() > 1e-9 {
                return Err(Error::NonIntegerDegree { value: span });
            }
            let mut prev = fiber.eval(x, 0.0);
            for j in 1..=CHECK_Y {
                let v = fiber.eval(x, j as f64 / CHECK_Y as f64);
                if s * (v - prev) <= 0.0 {
                    return Err(Error::FiberNotMonotone { x });
                }
                prev = v;
            }
        }
        Ok(Self {
            base,
            fiber,
            degree,
            domain_band: None,
        })
    }

    pub fn skew(base: BaseSpec, fiber: FiberSpec) -> Result<Self> {
        Self::new(base, Fiber::Skew(fiber))
    }

    pub fn from_spec(spec: &AnnulusSpec) -> Result<Self> {
        let mut m = Self::skew(spec.base.clone(), spec.fiber.clone())?;
        if let Some(d) = spec.degree {
            if d != m.degree {
                return Err(Error::DegreeMismatch { left: d, right: m.degree });
            }
        }
        if let Some(band) = spec.band {
            m = m.with_band(band)?;
        }
        Ok(m)
    }

    /// `(x, z) -> (x, z^d)`.
    pub fn product(d: i64) -> Self {
        Self::skew(BaseSpec::identity(), FiberSpec::power(d)).expect("valid product map")
    }

    pub fn with_band(mut self, band: [f64; 2]) -> Result<Self> {
        if !(0.0 < band[0] && band[0] < band[1] && band[1] < 1.0) {
            return Err(Error::BadParams(format!("band {band:?} is not inside (0, 1)")));
        }
        self.domain_band = Some(band);
        Ok(self)
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn base_spec(&self) -> &BaseSpec {
        &self.base
    }

    pub fn fiber(&self) -> &Fiber {
        &self.fiber
    }

    pub fn domain_band(&self) -> Option<[f64; 2]> {
        self.domain_band
    }

    pub fn base(&self, x: f64) -> f64 {
        self.base.eval(x)
    }

    pub fn fiber_eval(&self, x: f64, y: f64) -> f64 {
        let k = y.floor();
        self.fiber.eval(x, y - k) + k * self.degree as f64
    }

    pub fn in_domain(&self, x: f64) -> bool {
        match self.domain_band {
            Some([a, b]) => x >= a && x <= b,
            None => x > 0.0 && x < 1.0,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !self.in_domain(x) {
            return Err(Error::OutOfDomain { x });
        }
        Ok((self.base(x), self.fiber_eval(x, y)))
    }

    /// The unique `y` with `g_x(y) = v`.
    pub fn fiber_inverse(&self, x: f64, v: f64) -> f64 {
        let d = self.degree as f64;
        let g0 = self.fiber_eval(x, 0.0);
        let guess = ((v - g0) / d).floor();
        let s = d.signum();
        let mut lo = guess - 1.0;
        let mut hi = guess + 2.0;
        while s * (self.fiber_eval(x, lo) - v) > 0.0 {
            lo -= 1.0;
        }
        while s * (self.fiber_eval(x, hi) - v) < 0.0 {
            hi += 1.0;
        }
        crate::bisect(|y| s * (self.fiber_eval(x, y) - v), lo, hi, 0.0)
    }

    /// The `x` in `(0, 1)` with `base(x) = target`, by bisection.
    pub fn base_inverse(&self, target: f64) -> Result<f64> {
        let (lo, hi) = (1e-15, 1.0 - 1e-15);
        let (flo, fhi) = (self.base(lo) - target, self.base(hi) - target);
        if flo == 0.0 {
            return Ok(lo);
        }
        if !(flo < 0.0 && fhi > 0.0 || flo > 0.0 && fhi < 0.0) {
            return Err(Error::BaseNotInvertible { target });
        }
        Ok(crate::bisect(|x| self.base(x) - target, lo, hi, 0.0))
    }

    /// Smallest sampled slope of `|g_x|` over the fiber at `x`.
    pub fn min_fiber_slope(&self, x: f64, samples: usize) -> f64 {
        let h = 1.0 / samples as f64;
        (0..samples)
            .map(|j| {
                let y = j as f64 * h;
                ((self.fiber_eval(x, y + h) - self.fiber_eval(x, y)) / h).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementReport {
    /// `sup |y1 - d y0|` over the band.
    pub sup: f64,
    /// The same supremum over `[m, 1 - m]` for shrinking margins `m`.
    pub margins: Vec<(f64, f64)>,
    pub divergent: bool,
}

fn displacement_sup(map: &AnnulusMapLift, a: f64, b: f64, grid: usize) -> f64 {
    let d = map.degree() as f64;
    let mut sup: f64 = 0.0;
    for i in 0..=grid {
        let x = a + (b - a) * i as f64 / grid as f64;
        for j in 0..grid {
            let y = j as f64 / grid as f64;
            sup = sup.max((map.fiber_eval(x, y) - d * y).abs());
        }
    }
    sup
}

/// Sampled `sup |y1 - d y0|` over `band x [0, 1)`, with a growth test over
/// six margins from `1e-1` to `1e-6`.
pub fn displacement_bound(map: &AnnulusMapLift, band: [f64; 2], grid: usize) -> DisplacementReport {
    let grid = grid.max(2);
    let sup = displacement_sup(map, band[0], band[1], grid);
    let margins: Vec<(f64, f64)> = (1..=6)
        .map(|k| {
            let m = 10f64.powi(-k);
            (m, displacement_sup(map, m, 1.0 - m, grid.min(64)))
        })
        .collect();
    let increasing = margins.windows(2).all(|w| w[1].1 > w[0].1);
    let divergent = increasing && margins[5].1 >= 10.0 * margins[0].1;
    DisplacementReport { sup, margins, divergent }
}

/// The `|d|` preimages of `(x', theta')` with fiber coordinate in `[0, 1)`.
pub fn fiber_preimages(map: &AnnulusMapLift, target: (f64, f64), _tol: f64) -> Result<Vec<(f64, f64)>> {
    let x = map.base_inverse(target.0)?;
    let d = map.degree();
    let g0 = map.fiber_eval(x, 0.0);
    let g1 = g0 + d as f64;
    let (lo, hi) = if d > 0 { (g0, g1) } else { (g1, g0) };
    let mut m = (lo - target.1).ceil();
    let mut out = Vec::with_capacity(d.unsigned_abs() as usize);
    while target.1 + m < hi {
        let y = map.fiber_inverse(x, target.1 + m);
        out.push((x, crate::wrap(y)));
        m += 1.0;
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationEstimate {
    /// `y_n / d^n` for `n = 0..=n_max`.
    pub estimates: Vec<f64>,
    /// `max |e_n - e_{n_max}|` over the last quarter of the sequence.
    pub gap: f64,
    pub converged: bool,
}

pub fn estimate_annulus_rotation(map: &AnnulusMapLift, start: (f64, f64), n_max: usize) -> Result<RotationEstimate> {
    let d = map.degree() as f64;
    let (mut x, mut y) = start;
    let mut scale = 1.0;
    let mut estimates = vec![y];
    for step in 1..=n_max {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::OrbitEscapes { step: step - 1 });
        }
        y = map.fiber_eval(x, y);
        x = map.base(x);
        scale *= d;
        estimates.push(y / scale);
    }
    let last = estimates[estimates.len() - 1];
    let from = n_max - n_max / 4;
    let gap = estimates[from..].iter().map(|e| (e - last).abs()).fold(0.0, f64::max);
    Ok(RotationEstimate {
        estimates,
        gap,
        converged: gap <= 1e-6,
    })
}
