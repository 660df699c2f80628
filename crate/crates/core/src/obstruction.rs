//! Winding of iterated loop lifts against the reference connector `y = 0`,
//! and the band bookkeeping of a map whose windings grow without bound.

use serde::{Deserialize, Serialize};

use crate::annulus::AnnulusMapLift;
use crate::circle_dist;
use crate::error::{Error, Result};

/// A closed loop in the lifted annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoopSpec {
    /// One positive turn around the fiber over `x`, starting at height `y`.
    FiberCircle { x: f64, y: f64 },
    /// Polyline whose last point is the first raised by an integer.
    Polygon { points: Vec<[f64; 2]> },
}

impl LoopSpec {
    fn validate(&self) -> Result<()> {
        match self {
            LoopSpec::FiberCircle { x, y } => {
                if !(*x > 0.0 && *x < 1.0 && y.is_finite()) {
                    return Err(Error::BadParams(format!("fiber circle at ({x}, {y}) is outside the annulus")));
                }
            }
            LoopSpec::Polygon { points } => {
                if points.len() < 2 {
                    return Err(Error::BadParams("a loop needs at least two points".into()));
                }
                let (p, q) = (points[0], points[points.len() - 1]);
                let k = q[1] - p[1];
                if p[0] != q[0] || k != k.round() {
                    return Err(Error::BadParams("polygon must close up to an integer lift".into()));
                }
                if points.iter().any(|p| !(p[0] > 0.0 && p[0] < 1.0 && p[1].is_finite())) {
                    return Err(Error::BadParams("polygon leaves the annulus".into()));
                }
            }
        }
        Ok(())
    }

    pub fn base_point(&self) -> (f64, f64) {
        match self {
            LoopSpec::FiberCircle { x, y } => (*x, *y),
            LoopSpec::Polygon { points } => (points[0][0], points[0][1]),
        }
    }

    /// Integer rise of one traversal.
    pub fn turns(&self) -> f64 {
        match self {
            LoopSpec::FiberCircle { .. } => 1.0,
            LoopSpec::Polygon { points } => points[points.len() - 1][1] - points[0][1],
        }
    }

    /// Lifted point at parameter `t`; each unit of `t` is one traversal.
    pub fn point(&self, t: f64) -> (f64, f64) {
        let k = t.floor();
        let s = t - k;
        match self {
            LoopSpec::FiberCircle { x, y } => (*x, y + t),
            LoopSpec::Polygon { points } => {
                let m = points.len() - 1;
                let u = s * m as f64;
                let i = (u.floor() as usize).min(m - 1);
                let r = u - i as f64;
                let (a, b) = (points[i], points[i + 1]);
                (a[0] + r * (b[0] - a[0]), a[1] + r * (b[1] - a[1]) + k * self.turns())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindingRecord {
    pub n: u32,
    pub j: u64,
    pub start: (f64, f64),
    /// Lifted endpoint heights of the lift.
    pub y1: f64,
    pub y2: f64,
    /// `|floor(y2) - floor(y1)|`, crossings of the connector `y = 0`.
    pub winding: u64,
    /// Sup distance between `F^n` of the lift and the lifted loop.
    pub pushforward_defect: f64,
}

fn base_is_monotone(map: &AnnulusMapLift) -> bool {
    let v: Vec<f64> = (1..256).map(|i| map.base(i as f64 / 256.0)).collect();
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

fn forward(map: &AnnulusMapLift, (mut x, mut y): (f64, f64), n: u32) -> (f64, f64) {
    for _ in 0..n {
        y = map.fiber_eval(x, y);
        x = map.base(x);
    }
    (x, y)
}

/// Unique lifted preimage of `(x, y)` under `F^n`.
fn backward(map: &AnnulusMapLift, (mut x, mut y): (f64, f64), n: u32) -> Option<(f64, f64)> {
    for _ in 0..n {
        x = map.base_inverse(x).ok()?;
        y = map.fiber_inverse(x, y);
    }
    Some((x, y))
}

/// Lifts `j` traversals of `alpha` under `f^n` from `start`, an `f^n`-preimage
/// of the loop's base point, and measures its winding against `y = 0`.
pub fn lift_loop_winding(
    map: &AnnulusMapLift,
    alpha: &LoopSpec,
    n: u32,
    j: u64,
    start: (f64, f64),
    band: [f64; 2],
    tol: f64,
) -> Result<WindingRecord> {
    alpha.validate()?;
    if n == 0 || j == 0 {
        return Err(Error::BadParams("n and j must be positive".into()));
    }
    let ambiguous = Error::BranchAmbiguity { n, j };
    if !base_is_monotone(map) {
        return Err(ambiguous);
    }
    let p0 = alpha.base_point();
    let image = forward(map, start, n);
    if (image.0 - p0.0).abs() > tol || circle_dist(image.1, p0.1) > tol {
        return Err(Error::BadParams(format!(
            "start {start:?} is not an f^{n}-preimage of {p0:?}"
        )));
    }
    let level = (image.1 - p0.1).round();
    let lift_at = |t: f64| {
        let (x, y) = alpha.point(t);
        backward(map, (x, y + level), n)
    };
    const STEPS_PER_TURN: f64 = 8.0;
    let end = j as f64;
    let mut t = 0.0;
    let mut step = 1.0 / STEPS_PER_TURN;
    let mut prev = (start.0, start.1);
    let mut defect: f64 = 0.0;
    let mut halvings = 0;
    while t < end {
        let next_t = (t + step).min(end);
        let Some(next) = lift_at(next_t) else {
            return Err(ambiguous);
        };
        if (next.1 - prev.1).abs() > 0.25 || (next.0 - prev.0).abs() > 0.25 {
            halvings += 1;
            if halvings > 30 {
                return Err(ambiguous);
            }
            step *= 0.5;
            continue;
        }
        let (ax, ay) = alpha.point(next_t);
        let (fx, fy) = forward(map, next, n);
        defect = defect.max((fx - ax).abs()).max((fy - ay - level).abs());
        prev = next;
        t = next_t;
        step = 1.0 / STEPS_PER_TURN;
        halvings = 0;
    }
    for x in [start.0, prev.0] {
        if !(x >= band[0] && x <= band[1]) {
            return Err(Error::EndpointOutsideK { x });
        }
    }
    let (y1, y2) = (start.1, prev.1);
    Ok(WindingRecord {
        n,
        j,
        start,
        y1,
        y2,
        winding: (y2.floor() - y1.floor()).abs() as u64,
        pushforward_defect: defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindingReport {
    pub band: [f64; 2],
    pub alpha: LoopSpec,
    pub records: Vec<WindingRecord>,
    /// Largest winding for each scanned `n`.
    pub max_by_n: Vec<(u32, u64)>,
    /// Iterates whose preimage base point falls outside the band.
    pub skipped_n: Vec<u32>,
    /// `sup |H - y|` on the band, measured elsewhere.
    pub deviation_bound: f64,
    /// `2M + 1`.
    pub implied_bound: f64,
    pub holds: bool,
}

/// Windings for `n = 1..=n_max`, `j` in `{1, ceil(d^{n-1}/2), d^{n-1}}`, over
/// every `f^n`-preimage of the loop's base point.
pub fn star_condition_scan(
    map: &AnnulusMapLift,
    band: [f64; 2],
    alpha: &LoopSpec,
    n_max: u32,
    deviation_bound: f64,
) -> Result<WindingReport> {
    alpha.validate()?;
    let d = map.degree().unsigned_abs();
    let p0 = alpha.base_point();
    let mut records = Vec::new();
    let mut max_by_n = Vec::new();
    let mut skipped_n = Vec::new();
    for n in 1..=n_max {
        let Some((xs, _)) = backward(map, (p0.0, p0.1), n) else {
            skipped_n.push(n);
            continue;
        };
        if !(xs >= band[0] && xs <= band[1]) {
            skipped_n.push(n);
            continue;
        }
        let full = d.pow(n - 1);
        let mut js = vec![1, full.div_ceil(2), full];
        js.dedup();
        let mut max = 0;
        for k in 0..d.pow(n) {
            let Some(start) = backward(map, (p0.0, p0.1 + k as f64), n) else {
                return Err(Error::BranchAmbiguity { n, j: 1 });
            };
            for &j in &js {
                let r = lift_loop_winding(map, alpha, n, j, start, band, 1e-9)?;
                max = max.max(r.winding);
                records.push(r);
            }
        }
        max_by_n.push((n, max));
    }
    let implied_bound = 2.0 * deviation_bound + 1.0;
    let holds = records.iter().all(|r| r.winding as f64 <= implied_bound);
    Ok(WindingReport {
        band,
        alpha: alpha.clone(),
        records,
        max_by_n,
        skipped_n,
        deviation_bound,
        implied_bound,
        holds,
    })
}

/// Band radius `a_k = 1 / (1 + 2^{-k})`.
pub fn band_radius(k: i32) -> f64 {
    1.0 / (1.0 + 2f64.powi(-k))
}

/// Lifted endpoint bookkeeping for stage `n` of the unbounded-winding map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandModel {
    pub n: u32,
    /// `a_0, a_1, a_{n-1}, a_n`.
    pub radii: [f64; 4],
    /// Lift of `alpha` from `(a_0, 0)` to `(a_1, n)`.
    pub alpha_start: (f64, f64),
    pub alpha_end: (f64, f64),
    /// Vertical offset `t` of the disjoint curve `alpha'`.
    pub offset: f64,
    pub alpha_prime_end: (f64, f64),
    /// Heights of the endpoints of `beta'`, over `a_{n-1}` and `a_n`.
    pub beta_prime: [(f64, f64); 2],
    /// Point of `alpha` lifted below height `1/2`.
    pub x_prime: (f64, f64),
    /// Point of `alpha'` lifted above height `n`.
    pub y_prime: (f64, f64),
    pub lower_bound: u64,
}

impl BandModel {
    pub fn new(n: u32) -> Self {
        let nf = n as f64;
        let (a0, a1) = (band_radius(0), band_radius(1));
        let t = 0.5;
        let on_alpha = |s: f64, shift: f64| (a0 + s * (a1 - a0), shift + s * nf);
        // heights 1/4 on alpha and n + t/2 on alpha'
        let x_prime = on_alpha(0.25 / nf, 0.0);
        let y_prime = on_alpha((nf + 0.5 * t - t) / nf, t);
        Self {
            n,
            radii: [a0, a1, band_radius(n as i32 - 1), band_radius(n as i32)],
            alpha_start: (a0, 0.0),
            alpha_end: (a1, nf),
            offset: t,
            alpha_prime_end: (a1, nf + t),
            beta_prime: [(band_radius(n as i32 - 1), -1.0), (band_radius(n as i32), -1.0)],
            x_prime,
            y_prime,
            lower_bound: (n - 1) as u64,
        }
    }

    /// Every inequality the construction relies on.
    pub fn check(&self) -> bool {
        let nf = self.n as f64;
        let [a0, a1, an1, an] = self.radii;
        let disjoint = self.offset > 0.0 && self.offset < 1.0;
        let within = |p: (f64, f64)| p.0 >= a0 && p.0 <= a1;
        a0 < a1
            && an1 < an
            && self.alpha_end.1 == nf
            && self.alpha_prime_end.1 - self.alpha_end.1 == self.offset
            && disjoint
            && self.x_prime.1 < 0.5
            && self.y_prime.1 > nf
            && within(self.x_prime)
            && within(self.y_prime)
            && self.beta_prime.iter().all(|p| p.1 == -1.0)
            && self.y_prime.1 - self.x_prime.1 > self.lower_bound as f64
    }
}

/// Certified lower bounds `C_K >= n - 1` for `n = 2..=n_max`.
pub fn counterexample_growth_table(n_max: u32) -> Vec<BandModel> {
    (2..=n_max).map(BandModel::new).collect()
}
