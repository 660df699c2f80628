//! Connector curves in the lifted annulus `(0, 1) x R`, realized as graphs
//! `x -> y(x)`. Provides preimages, freeness, invariant connectors grown from
//! an arc, repelling connectors by nested preimages, and the semiconjugacy
//! they determine.

use serde::Serialize;

use crate::annulus::AnnulusMapLift;
use crate::error::{Error, Result};
use crate::semiconj1d::Orientation;
use crate::semiconj2d::{BandField2D, BandGrid};
use crate::circle_dist;

pub const DEFAULT_MARGIN: f64 = 1e-3;

/// Minimum fiber separation between preimage branches.
const BRANCH_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectorCurve {
    xs: Vec<f64>,
    heights: Vec<f64>,
    pub margin: f64,
}

impl ConnectorCurve {
    pub fn new(xs: Vec<f64>, heights: Vec<f64>, margin: f64) -> Result<Self> {
        if xs.len() != heights.len() || xs.len() < 2 {
            return Err(Error::BadParams("a connector needs at least two samples".into()));
        }
        if !(margin > 0.0 && margin < 0.5) {
            return Err(Error::BadParams(format!("margin {margin} not in (0, 1/2)")));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::BadParams("connector x samples must increase".into()));
        }
        if !(xs[0] > 0.0 && xs[xs.len() - 1] < 1.0) {
            return Err(Error::BadParams("connector must lie over (0, 1)".into()));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::NonFiniteSample { index: i });
        }
        Ok(Self { xs, heights, margin })
    }

    /// Graph of `f` on `[margin, 1 - margin]`.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, margin: f64, samples: usize) -> Result<Self> {
        let xs = uniform(margin, 1.0 - margin, samples.max(2));
        let heights = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, heights, margin)
    }

    pub fn constant(height: f64, margin: f64, samples: usize) -> Result<Self> {
        Self::from_fn(|_| height, margin, samples)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Linear interpolation; `NaN` outside `[x_min, x_max]`.
    pub fn eval(&self, x: f64) -> f64 {
        interp_sorted(&self.xs, &self.heights, x)
    }

    pub fn reaches_lower(&self) -> bool {
        self.x_min() <= self.margin * (1.0 + 1e-9)
    }

    pub fn reaches_upper(&self) -> bool {
        self.x_max() >= 1.0 - self.margin * (1.0 + 1e-9)
    }

    /// Reaches both truncation margins.
    pub fn accumulates_on_both(&self) -> bool {
        self.reaches_lower() && self.reaches_upper()
    }

    /// Largest height jump between adjacent samples.
    pub fn max_step(&self) -> f64 {
        self.heights.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }

    pub fn shifted(&self, k: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            heights: self.heights.iter().map(|h| h + k).collect(),
            margin: self.margin,
        }
    }

    /// Sup vertical distance on the common x-range, or `None` if disjoint.
    pub fn sup_distance(&self, other: &Self) -> Option<f64> {
        let lo = self.x_min().max(other.x_min());
        let hi = self.x_max().min(other.x_max());
        if lo > hi {
            return None;
        }
        let mut sup: f64 = 0.0;
        for &x in self.xs.iter().chain(&other.xs) {
            if x >= lo && x <= hi {
                sup = sup.max((self.eval(x) - other.eval(x)).abs());
            }
        }
        Some(sup)
    }

    /// Keeps the longest run of finite samples.
    fn from_partial(xs: &[f64], heights: &[f64], margin: f64) -> Result<Self> {
        let (mut best, mut start) = ((0, 0), None);
        for i in 0..=heights.len() {
            let ok = i < heights.len() && heights[i].is_finite();
            match (ok, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    if i - s > best.1 - best.0 {
                        best = (s, i);
                    }
                    start = None;
                }
                _ => {}
            }
        }
        Self::new(xs[best.0..best.1].to_vec(), heights[best.0..best.1].to_vec(), margin)
    }
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn interp_sorted(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if !(x >= xs[0] && x <= xs[n - 1]) {
        return f64::NAN;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    if t == 0.0 {
        ys[i - 1]
    } else {
        ys[i - 1] + t * (ys[i] - ys[i - 1])
    }
}

/// Sub-interval of `[margin, 1 - margin]` that the base maps into `[lo, hi]`.
fn pullback_range(map: &AnnulusMapLift, lo: f64, hi: f64, margin: f64) -> Result<(f64, f64)> {
    let (a, b) = (margin, 1.0 - margin);
    let (fa, fb) = (map.base(a), map.base(b));
    let inside = |v: f64| v >= lo && v <= hi;
    let increasing = fb > fa;
    let (first, second) = if increasing { (lo, hi) } else { (hi, lo) };
    let start = if inside(fa) { a } else { map.base_inverse(first)? };
    let end = if inside(fb) { b } else { map.base_inverse(second)? };
    if !(start < end) || start < a || end > b {
        return Err(Error::BaseNotInvertible { target: first });
    }
    Ok((start, end))
}

/// Base preimages of the curve's samples inside `[lo, hi]`, with both ends.
fn pullback_grid(map: &AnnulusMapLift, c: &ConnectorCurve, lo: f64, hi: f64) -> Vec<f64> {
    let mut xs = vec![lo, hi];
    xs.extend(
        c.xs.iter()
            .filter_map(|&x| map.base_inverse(x).ok())
            .filter(|&x| x > lo && x < hi),
    );
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    if xs.len() < c.xs.len() / 2 {
        return uniform(lo, hi, c.xs.len().max(2));
    }
    xs
}

/// The `|d|` components of `f^{-1}(C)`, ordered by height at their left end.
pub fn preimage_connectors(map: &AnnulusMapLift, c: &ConnectorCurve) -> Result<Vec<ConnectorCurve>> {
    let (lo, hi) = pullback_range(map, c.x_min(), c.x_max(), c.margin)?;
    let xs = pullback_grid(map, c, lo, hi);
    let target = |x: f64| c.eval(map.base(x).clamp(c.x_min(), c.x_max()));
    let d = map.degree();
    let mut branches: Vec<Vec<f64>> = (0..d.abs())
        .map(|k| xs.iter().map(|&x| map.fiber_inverse(x, target(x) + k as f64)).collect())
        .collect();
    for b in &mut branches {
        let k = (b[0] + 1e-12).floor();
        b.iter_mut().for_each(|h| *h -= k);
    }
    branches.sort_by(|a, b| a[0].total_cmp(&b[0]));
    for (i, &x) in xs.iter().enumerate() {
        for a in 0..branches.len() {
            for b in a + 1..branches.len() {
                if circle_dist(branches[a][i], branches[b][i]) < BRANCH_SEPARATION {
                    return Err(Error::BranchCollision { x });
                }
            }
        }
    }
    branches
        .into_iter()
        .map(|h| ConnectorCurve::new(xs.clone(), h, c.margin))
        .collect()
}

/// Smallest circle distance between `f(C)` and `C` over their common
/// x-range, or `None` when the ranges do not meet.
pub fn image_gap(map: &AnnulusMapLift, c: &ConnectorCurve) -> Result<Option<f64>> {
    let img_x: Vec<f64> = c.xs.iter().map(|&x| map.base(x)).collect();
    let img_y: Vec<f64> = c.xs.iter().zip(&c.heights).map(|(&x, &y)| map.fiber_eval(x, y)).collect();
    let increasing = img_x.windows(2).all(|w| w[1] > w[0]);
    let decreasing = img_x.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::ImageNotGraph);
    }
    let (ix, iy) = if increasing {
        (img_x, img_y)
    } else {
        (img_x.into_iter().rev().collect(), img_y.into_iter().rev().collect())
    };
    let mut best: Option<f64> = None;
    let mut push = |d: f64| {
        if d.is_finite() {
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    };
    for (&x, &y) in ix.iter().zip(&iy) {
        push(circle_dist(y, c.eval(x)));
    }
    for (&x, &y) in c.xs.iter().zip(&c.heights) {
        push(circle_dist(interp_sorted(&ix, &iy, x), y));
    }
    Ok(best)
}

/// `f(C)` and `C` stay more than `tol` apart.
pub fn is_free(map: &AnnulusMapLift, c: &ConnectorCurve, tol: f64) -> Result<bool> {
    Ok(image_gap(map, c)?.is_none_or(|g| g > tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrownConnector {
    pub curve: ConnectorCurve,
    /// Sup circle distance between `f(C)` and `C` at the samples whose image
    /// stays over the curve.
    pub invariance_residual: f64,
    pub backward_steps: usize,
    pub forward_steps: usize,
}

/// Grows `C = union of f^n(gamma)` from the straight arc `gamma` joining `p`
/// to `f(p)`, with `n_fwd` forward images and `n_back` backward lifts, all
/// truncated to `[margin, 1 - margin]`.
pub fn invariant_connector_from_arc(
    map: &AnnulusMapLift,
    p: (f64, f64),
    n_back: usize,
    n_fwd: usize,
    samples: usize,
    margin: f64,
) -> Result<GrownConnector> {
    let q = (map.base(p.0), map.fiber_eval(p.0, p.1));
    if !(q.0 > p.0) {
        return Err(Error::NotMonotoneBase);
    }
    let samples = samples.max(2);
    let arc: Vec<(f64, f64)> = (0..=samples)
        .map(|i| {
            let t = i as f64 / samples as f64;
            (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
        })
        .collect();
    let top = 1.0 - margin;
    let mut forward = vec![arc.clone()];
    for _ in 0..n_fwd {
        let last = &forward[forward.len() - 1];
        if last[0].0 >= top {
            break;
        }
        let next: Vec<(f64, f64)> = last
            .iter()
            .map(|&(x, y)| (map.base(x), map.fiber_eval(x, y)))
            .collect();
        if next.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::NotMonotoneBase);
        }
        forward.push(next);
    }
    let mut backward: Vec<Vec<(f64, f64)>> = Vec::new();
    for _ in 0..n_back {
        let last = backward.last().unwrap_or(&forward[0]);
        let mut prev: Vec<(f64, f64)> = Vec::with_capacity(last.len() + 1);
        // clip at the margin
        let edge = map.base(margin);
        if edge > last[0].0 && edge < last[last.len() - 1].0 {
            let i = last.partition_point(|pt| pt.0 <= edge);
            let ((xa, ya), (xb, yb)) = (last[i - 1], last[i]);
            prev.push((margin, map.fiber_inverse(margin, ya + (yb - ya) * (edge - xa) / (xb - xa))));
        }
        for &(x1, y1) in last {
            if let Ok(x) = map.base_inverse(x1) {
                if x > margin {
                    prev.push((x, map.fiber_inverse(x, y1)));
                }
            }
        }
        if prev.len() < 2 {
            break;
        }
        backward.push(prev);
    }
    let (back_steps, fwd_steps) = (backward.len(), forward.len() - 1);
    let mut xs: Vec<f64> = Vec::new();
    let mut hs: Vec<f64> = Vec::new();
    let mut prev_pt: Option<(f64, f64)> = None;
    'segments: for seg in backward.iter().rev().chain(forward.iter()) {
        for &(x, y) in seg {
            if x > top {
                // close off exactly at the margin
                if let Some((x0, y0)) = prev_pt {
                    if x0 < top {
                        xs.push(top);
                        hs.push(y0 + (y - y0) * (top - x0) / (x - x0));
                    }
                }
                break 'segments;
            }
            prev_pt = Some((x, y));
            if let Some(&lx) = xs.last() {
                if x <= lx {
                    if x > lx - 1e-12 {
                        continue;
                    }
                    return Err(Error::NotMonotoneBase);
                }
            }
            xs.push(x);
            hs.push(y);
        }
    }
    let curve = ConnectorCurve::new(xs, hs, margin)?;
    let mut residual: f64 = 0.0;
    for (&x, &y) in curve.xs.iter().zip(&curve.heights) {
        let target = curve.eval(map.base(x));
        if target.is_finite() {
            residual = residual.max(circle_dist(map.fiber_eval(x, y), target));
        }
    }
    Ok(GrownConnector {
        curve,
        invariance_residual: residual,
        backward_steps: back_steps,
        forward_steps: fwd_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Repeller {
    pub curve: ConnectorCurve,
    /// Inverse branch `y -> g_x^{-1}(y + branch)` whose fixed graph this is.
    pub branch: i64,
    /// `sup |mid_n - mid_{n-1}|` for depths `n = 1..=depth`.
    pub depth_gaps: Vec<f64>,
    /// Sup width of the nested strip at the final depth.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepellerSet {
    pub repellers: Vec<Repeller>,
    /// Sampled lower bound on the fiber slope.
    pub expansion: f64,
    pub depth: usize,
}

/// Graph transform `y -> g_x^{-1}(c(base(x)) + m)` on the sample grid.
fn pull_back_curve(map: &AnnulusMapLift, xs: &[f64], c: &[f64], m: i64) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let v = interp_finite(xs, c, map.base(x));
            if v.is_finite() {
                map.fiber_inverse(x, v + m as f64)
            } else {
                f64::NAN
            }
        })
        .collect()
}

fn interp_finite(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let v = interp_sorted(xs, ys, x);
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

/// The `|d - 1|` repelling connectors in the complement of a free `C`,
/// approximated by `depth` levels of nested preimages of the strip between
/// `C` and `C + 1`.
pub fn repelling_connectors(map: &AnnulusMapLift, c: &ConnectorCurve, depth: usize) -> Result<RepellerSet> {
    let expansion = (0..32)
        .map(|i| map.min_fiber_slope(c.x_min() + (c.x_max() - c.x_min()) * i as f64 / 31.0, 256))
        .fold(f64::INFINITY, f64::min);
    if !(expansion > 1.0) {
        return Err(Error::NoExpansion { slope: expansion });
    }
    if let Some(g) = image_gap(map, c)? {
        if g <= BRANCH_SEPARATION {
            return Err(Error::NotFree { distance: g });
        }
    }
    let d = map.degree();
    let xs = c.xs.clone();
    let r = xs.len() / 2;
    let xr = xs[r];
    let (lo, hi) = (c.heights[r], c.heights[r] + 1.0);
    let cb = c.eval(map.base(xr));
    if !cb.is_finite() {
        return Err(Error::BaseNotInvertible { target: map.base(xr) });
    }
    // lifted strip of f^{-1}(C) containing C sits near level m0
    let m0 = (map.fiber_eval(xr, lo) - cb).floor() as i64;
    let w = |m: i64| map.fiber_inverse(xr, cb + m as f64);
    let span = 2 * d.abs() + 2;
    let branches: Vec<i64> = (m0 - span..=m0 + span)
        .filter(|&m| {
            let (a, b) = if d > 0 { (w(m), w(m + 1)) } else { (w(m + 1), w(m)) };
            if d > 0 {
                a > lo && b < hi
            } else {
                b > lo && a < hi
            }
        })
        .collect();
    if branches.len() as i64 != (d - 1).abs() {
        return Err(Error::BadParams(format!(
            "found {} inverse branches with fixed graphs, expected {}",
            branches.len(),
            (d - 1).abs()
        )));
    }
    let mut repellers = Vec::with_capacity(branches.len());
    for &m in &branches {
        let mut lower = c.heights.clone();
        let mut upper: Vec<f64> = lower.iter().map(|h| h + 1.0).collect();
        let mut mid: Vec<f64> = lower.iter().map(|h| h + 0.5).collect();
        let mut gaps = Vec::with_capacity(depth);
        for _ in 0..depth {
            let mut nl = pull_back_curve(map, &xs, &lower, m);
            let mut nu = pull_back_curve(map, &xs, &upper, m);
            if d < 0 {
                std::mem::swap(&mut nl, &mut nu);
            }
            for i in 0..xs.len() {
                lower[i] = lower[i].max(nl[i]);
                upper[i] = upper[i].min(nu[i]);
                if !(nl[i].is_finite() && nu[i].is_finite()) {
                    lower[i] = f64::NAN;
                    upper[i] = f64::NAN;
                }
            }
            let next: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| 0.5 * (a + b)).collect();
            let gap = next
                .iter()
                .zip(&mid)
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            gaps.push(gap);
            mid = next;
        }
        let width = lower
            .iter()
            .zip(&upper)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max);
        repellers.push(Repeller {
            curve: ConnectorCurve::from_partial(&xs, &mid, c.margin)?,
            branch: m,
            depth_gaps: gaps,
            width,
        });
    }
    repellers.sort_by(|a, b| a.curve.eval(xr).total_cmp(&b.curve.eval(xr)));
    Ok(RepellerSet {
        repellers,
        expansion,
        depth,
    })
}

/// Sup distance between a repeller and its own inverse-branch image.
pub fn repeller_defect(map: &AnnulusMapLift, r: &Repeller) -> f64 {
    let pulled = pull_back_curve(map, r.curve.xs(), r.curve.heights(), r.branch);
    pulled
        .iter()
        .zip(r.curve.heights())
        .filter(|(a, _)| a.is_finite())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepellerField {
    pub field: BandField2D,
    /// Guaranteed bound `d^{1 - depth}` on the lifted residual.
    pub residual_bound: f64,
    pub low_resolution: bool,
}

/// Lift of `h` coded by the repellers: `R_j` gets the value `j / (d - 1)`,
/// and a point gets `1/d^k` times the value of the repeller lattice cell
/// containing its `k`-th image (cell midpoint).
pub fn repeller_value(map: &AnnulusMapLift, set: &RepellerSet, x: f64, y: f64, depth: usize) -> f64 {
    let d = map.degree() as f64;
    let (mut x, mut y) = (x, y);
    for _ in 0..depth {
        y = map.fiber_eval(x, y);
        x = map.base(x);
    }
    let levels: Vec<f64> = set.repellers.iter().map(|r| r.curve.eval(x)).collect();
    if levels.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    let n = levels.len() as f64;
    let k = (y - levels[0]).floor();
    let yr = y - k;
    let j = levels.iter().rposition(|&l| l <= yr).unwrap_or(0) as f64;
    (k + (j + 0.5) / n) / d.powi(depth as i32)
}

pub fn semiconjugacy_from_repellers(
    map: &AnnulusMapLift,
    set: &RepellerSet,
    depth: usize,
    band: [f64; 2],
    grid: BandGrid,
) -> Result<RepellerField> {
    let d = map.degree();
    if d < 2 {
        return Err(Error::UnsupportedDegree { degree: d });
    }
    let mut field = BandField2D::from_fn(band, grid.nx, grid.ny, Orientation::Preserving, |x, y| {
        repeller_value(map, set, x, y, depth)
    });
    let mut residual: f64 = 0.0;
    for i in 0..=grid.nx {
        let x = field.x_at(i);
        for j in 0..grid.ny {
            let y = j as f64 / grid.ny as f64;
            let a = repeller_value(map, set, map.base(x), map.fiber_eval(x, y), depth);
            let b = d as f64 * field.sample(i, j);
            if a.is_finite() && b.is_finite() {
                residual = residual.max((a - b).abs());
            }
        }
    }
    field.residual = residual;
    field.off_grid_residual = field.measure_residuals(map).1;
    field.iterations = depth;
    let residual_bound = (d as f64).powi(1 - depth as i32);
    Ok(RepellerField {
        field,
        residual_bound,
        low_resolution: residual_bound > 1.0 / d as f64,
    })
}

/// From an invariant connector: a free component of its preimage, the
/// repellers it determines, and the coded field on `band`.
pub fn semiconjugacy_from_invariant_connector(
    map: &AnnulusMapLift,
    c: &ConnectorCurve,
    repeller_depth: usize,
    depth: usize,
    band: [f64; 2],
    grid: BandGrid,
) -> Result<RepellerField> {
    let mut best: Option<(f64, ConnectorCurve)> = None;
    for comp in preimage_connectors(map, c)? {
        if let Some(g) = image_gap(map, &comp)? {
            if best.as_ref().is_none_or(|(b, _)| g > *b) {
                best = Some((g, comp));
            }
        }
    }
    let free = match best {
        Some((g, comp)) if g > BRANCH_SEPARATION => comp,
        Some((g, _)) => return Err(Error::NotFree { distance: g }),
        None => return Err(Error::NotFree { distance: 0.0 }),
    };
    let set = repelling_connectors(map, &free, repeller_depth)?;
    semiconjugacy_from_repellers(map, &set, depth, band, grid)
}
