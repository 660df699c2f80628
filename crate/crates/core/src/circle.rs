//! Degree-d circle maps stored as sampled lifts.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::classify::BlowUpSpec;
use crate::error::{Error, Result};

/// Closed-form families a map can be built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CircleFamily {
    /// `F(x) = d x + shift`
    Linear {
        degree: i64,
        #[serde(default)]
        shift: f64,
    },
    /// `F(x) = d x + amplitude sin(2 pi x) + shift`
    Sine {
        degree: i64,
        amplitude: f64,
        #[serde(default)]
        shift: f64,
    },
    /// Raw lift values on a uniform grid of `[0, 1]`.
    Samples { values: Vec<f64> },
    Blowup(BlowUpSpec),
}

impl CircleFamily {
    pub const NAMES: [&'static str; 4] = ["linear", "sine", "samples", "blowup"];
}

/// Lift of a degree-d circle endomorphism, piecewise linear on `N` cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftedCircleMap {
    samples: Vec<f64>,
    degree: i64,
    is_covering: bool,
    family: Option<CircleFamily>,
}

pub const MIN_CELLS: usize = 16;

impl LiftedCircleMap {
    /// Builds a map from `N + 1` samples of `F` at `i / N`.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < MIN_CELLS + 1 {
            return Err(Error::TooFewSamples {
                cells: samples.len().saturating_sub(1),
            });
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        let span = samples[samples.len() - 1] - samples[0];
        let degree = span.round();
        if (span - degree).abs() > 1e-9 {
            return Err(Error::NonIntegerDegree { value: span });
        }
        let degree = degree as i64;
        if degree.abs() <= 1 {
            return Err(Error::DegreeTooSmall { degree });
        }
        let is_covering = samples.windows(2).all(|w| {
            if degree > 0 {
                w[1] > w[0]
            } else {
                w[1] < w[0]
            }
        });
        Ok(Self {
            samples,
            degree,
            is_covering,
            family: None,
        })
    }

    /// Samples `f` on `cells + 1` grid points.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, cells: usize) -> Result<Self> {
        let n = cells as f64;
        Self::from_samples((0..=cells).map(|i| f(i as f64 / n)).collect())
    }

    pub fn from_family(family: &CircleFamily, cells: usize) -> Result<Self> {
        let mut map = match family {
            CircleFamily::Linear { degree, shift } => {
                let d = *degree as f64;
                let s = *shift;
                Self::from_fn(|x| d * x + s, cells)?
            }
            CircleFamily::Sine {
                degree,
                amplitude,
                shift,
            } => {
                let d = *degree as f64;
                let (a, s) = (*amplitude, *shift);
                Self::from_fn(|x| d * x + a * (TAU * x).sin() + s, cells)?
            }
            CircleFamily::Samples { values } => Self::from_samples(values.clone())?,
            CircleFamily::Blowup(spec) => crate::classify::blow_up(spec, cells)?,
        };
        map.family = Some(family.clone());
        Ok(map)
    }

    /// `d x` on `cells` cells.
    pub fn model(degree: i64, cells: usize) -> Result<Self> {
        Self::from_family(&CircleFamily::Linear { degree, shift: 0.0 }, cells)
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn is_covering(&self) -> bool {
        self.is_covering
    }

    pub fn cells(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn family(&self) -> Option<&CircleFamily> {
        self.family.as_ref()
    }

    /// Same map with the lift translated by an integer.
    pub fn shifted(&self, j: i64) -> Self {
        let mut out = self.clone();
        for v in &mut out.samples {
            *v += j as f64;
        }
        out.family = None;
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = x.floor();
        let n = self.cells();
        let pos = (x - k) * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let t = pos - i as f64;
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        let v = if t == 0.0 { a } else { a + t * (b - a) };
        v + k * self.degree as f64
    }

    pub fn iterate(&self, mut x: f64, n: usize) -> f64 {
        for _ in 0..n {
            x = self.eval(x);
        }
        x
    }
}

/// A point of period dividing `n`, with its minimal period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicPoint {
    pub angle: f64,
    pub period: usize,
}

fn frac_dist(v: f64) -> f64 {
    (v - v.round()).abs()
}

/// All `x` in `[0, 1)` with `F^n(x) - x` an integer.
///
/// Each integer level crossed by `F^n - id` on a sampling cell is bisected.
/// Runs of grid points where `F^n - id` stays within `tol` of one integer
/// are reported by their two ends.
pub fn find_periodic_points(map: &LiftedCircleMap, n: usize, tol: f64) -> Result<Vec<PeriodicPoint>> {
    if !map.is_covering() {
        return Err(Error::NotACovering);
    }
    if n == 0 {
        return Err(Error::BadParams("period must be at least 1".into()));
    }
    let d = map.degree().unsigned_abs() as f64;
    let growth = d.powi(n as i32);
    let m = (4 * map.cells()).max((16.0 * growth).ceil() as usize);
    let g = |x: f64| map.iterate(x, n) - x;
    let xs: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();

    let near: Vec<bool> = gs.iter().map(|&v| frac_dist(v) <= tol).collect();
    let mut in_run = vec![false; m + 1];
    let mut roots = Vec::new();
    let mut i = 0;
    while i <= m {
        if near[i] {
            let mut j = i;
            while j < m && near[j + 1] && gs[j + 1].round() == gs[i].round() {
                j += 1;
            }
            if j > i {
                roots.push(xs[i]);
                roots.push(xs[j]);
                in_run[i..=j].iter_mut().for_each(|r| *r = true);
            } else if gs[i] == gs[i].round() {
                roots.push(xs[i]);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    for c in 0..m {
        if in_run[c] && in_run[c + 1] {
            continue;
        }
        let (a, b) = (gs[c], gs[c + 1]);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut k = lo.floor() + 1.0;
        while k < hi {
            let touches_run = (in_run[c] && gs[c].round() == k) || (in_run[c + 1] && gs[c + 1].round() == k);
            if !touches_run {
                roots.push(crate::bisect(|x| g(x) - k, xs[c], xs[c + 1], 0.0));
            }
            k += 1.0;
        }
    }

    let mut angles: Vec<f64> = roots.into_iter().map(crate::wrap).collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<f64> = Vec::with_capacity(angles.len());
    for a in angles {
        if out.last().is_none_or(|&p| crate::circle_dist(p, a) > 1e-12) {
            out.push(a);
        }
    }
    if out.len() > 1 && crate::circle_dist(out[0], out[out.len() - 1]) <= 1e-12 {
        out.pop();
    }

    Ok(out
        .into_iter()
        .map(|angle| {
            let period = (1..=n)
                .filter(|p| n % p == 0)
                .find(|&p| frac_dist(map.iterate(angle, p) - angle) <= tol * d.powi(p as i32) + 1e-12)
                .unwrap_or(n);
            PeriodicPoint { angle, period }
        })
        .collect())
}
