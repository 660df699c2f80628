//! Plateau sets of semiconjugacies, the classification data built from them,
//! comparison up to self-conjugacy, and synthetic maps obtained by opening
//! intervals along orbits of `z -> z^d`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use crate::circle::LiftedCircleMap;
use crate::error::{Error, Result};
use crate::semiconj1d::{self, Orientation, SelfConjugacy, SemiconjugacyField1D};
use crate::{circle_dist, wrap};

// ---------------------------------------------------------------------------
// Blow-up construction

/// Homeomorphism of `[0, 1]` placed on an opened periodic interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertKind {
    #[default]
    Identity,
    /// Repelling ends, attracting midpoint.
    NorthSouth,
    /// Attracting ends, repelling midpoint.
    SouthNorth,
    /// No interior fixed point, points move right.
    Drift,
    /// No interior fixed point, points move left.
    DriftBack,
}

impl InsertKind {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            InsertKind::Identity => u,
            InsertKind::NorthSouth => u + 0.1 * (TAU * u).sin(),
            InsertKind::SouthNorth => u - 0.1 * (TAU * u).sin(),
            InsertKind::Drift => u + 0.1 * (PI * u).sin(),
            InsertKind::DriftBack => u - 0.1 * (PI * u).sin(),
        }
    }

    /// The kind seen after conjugating by `u -> 1 - u`.
    pub fn reversed(self) -> Self {
        match self {
            InsertKind::Drift => InsertKind::DriftBack,
            InsertKind::DriftBack => InsertKind::Drift,
            k => k,
        }
    }
}

/// An angle given as a number or as a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseAngle {
    Value(f64),
    Ratio(String),
}

enum ParsedAngle {
    Rational(u64, u64),
    Real(f64),
}

impl BaseAngle {
    pub fn value(&self) -> Result<f64> {
        Ok(match self.parse()? {
            ParsedAngle::Rational(p, q) => p as f64 / q as f64,
            ParsedAngle::Real(v) => v,
        })
    }

    fn parse(&self) -> Result<ParsedAngle> {
        match self {
            BaseAngle::Ratio(s) => {
                let bad = || Error::BadParams(format!("angle {s:?} is not of the form p/q"));
                let (p, q) = s.split_once('/').ok_or_else(bad)?;
                let p: i64 = p.trim().parse().map_err(|_| bad())?;
                let q: i64 = q.trim().parse().map_err(|_| bad())?;
                if q <= 0 {
                    return Err(bad());
                }
                Ok(reduce(p.rem_euclid(q) as u64, q as u64))
            }
            BaseAngle::Value(v) => {
                if !v.is_finite() {
                    return Err(Error::BadParams("angle is not finite".into()));
                }
                let a = wrap(*v);
                for q in 1..=10_000u64 {
                    let p = (a * q as f64).round();
                    if (a - p / q as f64).abs() <= 1e-13 {
                        return Ok(reduce(p as u64 % q, q));
                    }
                }
                Ok(ParsedAngle::Real(a))
            }
        }
    }
}

fn reduce(p: u64, q: u64) -> ParsedAngle {
    let g = gcd(p, q).max(1);
    ParsedAngle::Rational(p / g, q / g)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Insertion {
    pub angle: BaseAngle,
    pub length: f64,
    #[serde(default)]
    pub kind: InsertKind,
}

fn default_max_depth() -> usize {
    12
}

/// Orbits of `z -> z^d` to open, with the truncation of their grand orbits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowUpSpec {
    pub degree: i64,
    #[serde(default)]
    pub insertions: Vec<Insertion>,
    /// Rotation applied to the blown-up circle.
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    /// Intervals shorter than this are not opened; defaults to a tenth of a
    /// grid cell.
    #[serde(default)]
    pub min_length: Option<f64>,
}

impl BlowUpSpec {
    pub fn new(degree: i64, insertions: Vec<Insertion>) -> Self {
        Self {
            degree,
            insertions,
            offset: 0.0,
            max_depth: default_max_depth(),
            min_length: None,
        }
    }

    /// The spec whose blow-up is conjugate to this one through `c`.
    pub fn conjugated(&self, c: &SelfConjugacy) -> Result<Self> {
        let mut out = self.clone();
        for ins in &mut out.insertions {
            let angle = match ins.angle.parse()? {
                ParsedAngle::Rational(p, q) => {
                    let m = c.modulus;
                    let num = if c.reflect { (q - p) % q } else { p } * m + c.rotation_index * q;
                    let den = q * m;
                    let ParsedAngle::Rational(p, q) = reduce(num % den, den) else {
                        unreachable!()
                    };
                    BaseAngle::Ratio(format!("{p}/{q}"))
                }
                ParsedAngle::Real(v) => BaseAngle::Value(c.apply(v)),
            };
            ins.angle = angle;
            if c.reflect {
                ins.kind = ins.kind.reversed();
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
struct Node {
    angle: f64,
    length: f64,
    /// Index of the node containing `d * angle`, with the integer lift.
    target: Option<(usize, i64)>,
    kind: InsertKind,
}

/// The exact blown-up lift, before sampling.
#[derive(Debug, Clone)]
pub struct BlowUp {
    degree: i64,
    nodes: Vec<Node>,
    left: Vec<f64>,
    prefix: Vec<f64>,
    gap_scale: f64,
    offset: f64,
}

/// An opened interval: its angle, position on the circle, and length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpenedInterval {
    pub angle: f64,
    pub start: f64,
    pub length: f64,
}

struct Builder {
    d: i64,
    nodes: Vec<Node>,
    max_depth: usize,
    min_length: f64,
}

impl Builder {
    fn push(&mut self, angle: f64, length: f64) -> usize {
        self.nodes.push(Node {
            angle,
            length,
            target: None,
            kind: InsertKind::Identity,
        });
        self.nodes.len() - 1
    }

    fn add_tree(&mut self, parent: usize, depth: usize, skip: &[f64]) {
        let d = self.d as f64;
        let theta = self.nodes[parent].angle;
        let len = self.nodes[parent].length / (2.0 * d);
        if depth >= self.max_depth || len < self.min_length {
            return;
        }
        for j in 0..self.d {
            let a = (theta + j as f64) / d;
            if skip.iter().any(|&s| circle_dist(s, a) < 1e-12) {
                continue;
            }
            let child = self.push(a, len);
            self.nodes[child].target = Some((parent, j));
            self.add_tree(child, depth + 1, &[]);
        }
    }

    fn add_rational(&mut self, p: u64, q: u64, length: f64, kind: InsertKind) {
        let d = self.d as u64;
        let mut seq = vec![p];
        let mut seen = HashMap::from([(p, 0usize)]);
        let cycle_start = loop {
            let next = d * seq[seq.len() - 1] % q;
            if let Some(&i) = seen.get(&next) {
                break i;
            }
            seen.insert(next, seq.len());
            seq.push(next);
        };
        let ids: Vec<usize> = seq.iter().map(|&a| self.push(a as f64 / q as f64, length)).collect();
        for (i, &a) in seq.iter().enumerate() {
            let next = if i + 1 < seq.len() { i + 1 } else { cycle_start };
            let lift = ((d * a - seq[next]) / q) as i64;
            self.nodes[ids[i]].target = Some((ids[next], lift));
            if i + 1 == seq.len() {
                self.nodes[ids[i]].kind = kind;
            }
        }
        let orbit: Vec<f64> = seq.iter().map(|&a| a as f64 / q as f64).collect();
        for &id in &ids {
            self.add_tree(id, 0, &orbit);
        }
    }

    fn add_real(&mut self, theta: f64, length: f64) {
        let d = self.d as f64;
        let mut ids = vec![self.push(theta, length)];
        let mut len = length;
        loop {
            len /= 2.0 * d;
            if len < self.min_length || ids.len() > self.max_depth {
                break;
            }
            let prev = self.nodes[ids[ids.len() - 1]].angle;
            let image = d * prev;
            let next = self.push(wrap(image), len);
            let lift = (image - self.nodes[next].angle).round() as i64;
            let last = ids[ids.len() - 1];
            self.nodes[last].target = Some((next, lift));
            ids.push(next);
        }
        let orbit: Vec<f64> = ids.iter().map(|&i| self.nodes[i].angle).collect();
        for &id in &ids {
            self.add_tree(id, 0, &orbit);
        }
    }
}

impl BlowUp {
    pub fn new(spec: &BlowUpSpec, cells: usize) -> Result<Self> {
        if spec.degree < 2 {
            return Err(Error::UnsupportedDegree { degree: spec.degree });
        }
        let min_length = spec.min_length.unwrap_or(0.1 / cells.max(1) as f64);
        if !(min_length > 0.0) {
            return Err(Error::BadParams("min_length must be positive".into()));
        }
        let requested: f64 = spec.insertions.iter().map(|i| i.length).sum();
        if requested >= 1.0 {
            return Err(Error::Overfull { total: requested });
        }
        let mut b = Builder {
            d: spec.degree,
            nodes: Vec::new(),
            max_depth: spec.max_depth,
            min_length,
        };
        for ins in &spec.insertions {
            if !(ins.length > 0.0) {
                return Err(Error::BadParams("insertion length must be positive".into()));
            }
            match ins.angle.parse()? {
                ParsedAngle::Rational(p, q) => b.add_rational(p, q, ins.length, ins.kind),
                ParsedAngle::Real(v) => b.add_real(v, ins.length),
            }
        }
        let mut order: Vec<usize> = (0..b.nodes.len()).collect();
        order.sort_by(|&i, &j| b.nodes[i].angle.total_cmp(&b.nodes[j].angle));
        let mut rank = vec![0; order.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let nodes: Vec<Node> = order
            .iter()
            .map(|&i| {
                let mut n = b.nodes[i].clone();
                n.target = n.target.map(|(t, m)| (rank[t], m));
                n
            })
            .collect();
        for w in 0..nodes.len() {
            let next = (w + 1) % nodes.len();
            if nodes.len() > 1 && circle_dist(nodes[w].angle, nodes[next].angle) < 1e-12 {
                return Err(Error::Clash { angle: nodes[w].angle });
            }
        }
        let total: f64 = nodes.iter().map(|n| n.length).sum();
        if total >= 1.0 {
            return Err(Error::Overfull { total });
        }
        let gap_scale = 1.0 - total;
        let mut prefix = Vec::with_capacity(nodes.len() + 1);
        prefix.push(0.0);
        for n in &nodes {
            prefix.push(prefix[prefix.len() - 1] + n.length);
        }
        let left = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| gap_scale * n.angle + prefix[i])
            .collect();
        Ok(Self {
            degree: spec.degree,
            nodes,
            left,
            prefix,
            gap_scale,
            offset: spec.offset,
        })
    }

    pub fn intervals(&self) -> Vec<OpenedInterval> {
        self.nodes
            .iter()
            .zip(&self.left)
            .map(|(n, &l)| OpenedInterval {
                angle: n.angle,
                start: wrap(l + self.offset),
                length: n.length,
            })
            .collect()
    }

    pub fn total_length(&self) -> f64 {
        1.0 - self.gap_scale
    }

    /// Position of the left end of the blown-up point over angle `y`.
    fn position(&self, y: f64) -> f64 {
        let k = y.floor();
        let s = y - k;
        let c = self.nodes.partition_point(|n| n.angle < s);
        self.gap_scale * s + self.prefix[c] + k
    }

    fn image_left(&self, i: usize) -> f64 {
        match self.nodes[i].target {
            Some((t, m)) => self.left[t] + m as f64,
            None => self.position(self.degree as f64 * self.nodes[i].angle),
        }
    }

    fn image_right(&self, i: usize) -> f64 {
        match self.nodes[i].target {
            Some((t, m)) => self.left[t] + self.nodes[t].length + m as f64,
            None => self.position(self.degree as f64 * self.nodes[i].angle),
        }
    }

    fn eval_unit(&self, r: f64) -> f64 {
        let d = self.degree as f64;
        let n = self.nodes.len();
        if n == 0 {
            return d * r;
        }
        let idx = self.left.partition_point(|&l| l <= r);
        // gap between node `lo` (lifted by `shift`) and the next node
        let (lo, shift) = if idx == 0 {
            (n - 1, -1.0)
        } else {
            let i = idx - 1;
            let right = self.left[i] + self.nodes[i].length;
            if r <= right {
                let node = &self.nodes[i];
                let u = (r - self.left[i]) / node.length;
                return match node.target {
                    Some((t, m)) => self.left[t] + m as f64 + self.nodes[t].length * node.kind.apply(u),
                    None => self.image_left(i),
                };
            }
            (i, 0.0)
        };
        let (hi, hi_shift) = if lo + 1 == n { (0, shift + 1.0) } else { (lo + 1, shift) };
        let right = self.left[lo] + self.nodes[lo].length + shift;
        let theta = self.nodes[lo].angle + shift + (r - right) / self.gap_scale;
        let floor = self.image_right(lo) + d * shift;
        let ceil = self.image_left(hi) + d * hi_shift;
        self.position(d * theta).clamp(floor, ceil)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x - self.offset;
        let k = x.floor();
        self.eval_unit(x - k) + k * self.degree as f64 + self.offset
    }

    /// The semiconjugacy of the exact map: collapses each opened interval.
    pub fn collapse(&self, x: f64) -> f64 {
        let x = x - self.offset;
        let k = x.floor();
        let r = x - k;
        let idx = self.left.partition_point(|&l| l <= r);
        let theta = if idx == 0 {
            r / self.gap_scale
        } else {
            let i = idx - 1;
            let right = self.left[i] + self.nodes[i].length;
            if r <= right {
                self.nodes[i].angle
            } else {
                self.nodes[i].angle + (r - right) / self.gap_scale
            }
        };
        theta + k
    }
}

/// Samples the blown-up lift on `cells` cells.
pub fn blow_up(spec: &BlowUpSpec, cells: usize) -> Result<LiftedCircleMap> {
    let b = BlowUp::new(spec, cells)?;
    LiftedCircleMap::from_fn(|x| b.eval(x), cells)
}

// ---------------------------------------------------------------------------
// Plateaus

/// Maximal run of grid points on which `H` is nearly constant. `end` may
/// exceed one when the run crosses angle zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    pub start: f64,
    pub end: f64,
    pub cells: usize,
    /// `H` at the flattest sample of the run, reduced mod 1.
    pub value: f64,
}

impl Plateau {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

pub const DEFAULT_MIN_CELLS: usize = 4;

/// Plateaus with the default tolerance `2 / N` and at least four cells.
pub fn plateau_set(h: &SemiconjugacyField1D, plateau_tol: Option<f64>) -> Vec<Plateau> {
    let tol = plateau_tol.unwrap_or(2.0 / h.cells() as f64);
    plateau_set_with(h, tol, DEFAULT_MIN_CELLS)
}

/// Runs are grown one step at a time: each step may move `H` by at most
/// `tol / 16` and the whole run by less than `tol`.
pub fn plateau_set_with(h: &SemiconjugacyField1D, tol: f64, min_cells: usize) -> Vec<Plateau> {
    let s = h.samples();
    let n = h.cells();
    let step_tol = tol / 16.0;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && (s[j + 1] - s[j]).abs() <= step_tol && (s[j + 1] - s[i]).abs() < tol {
            j += 1;
        }
        if j > i {
            runs.push((i, j));
        }
        i = j.max(i + 1);
    }
    let o = h.orientation().sign();
    let mut pieces: Vec<(i64, Vec<f64>)> = Vec::new();
    let wraps = runs.len() > 1 && runs[0].0 == 0 && runs[runs.len() - 1].1 == n;
    if wraps {
        let (a0, b0) = runs.remove(0);
        let (a1, _) = runs.pop().expect("two runs");
        let vals = s[a1..n].iter().map(|v| v - o).chain(s[a0..=b0].iter().copied()).collect();
        pieces.push((a1 as i64, vals));
    }
    pieces.extend(runs.iter().map(|&(a, b)| (a as i64, s[a..=b].to_vec())));
    let mut out: Vec<Plateau> = pieces
        .into_iter()
        .filter(|(_, vals)| vals.len() > min_cells)
        .map(|(a, vals)| Plateau {
            start: a as f64 / n as f64,
            end: (a as usize + vals.len() - 1) as f64 / n as f64,
            cells: vals.len() - 1,
            value: wrap(flattest(&vals)),
        })
        .collect();
    out.sort_by(|a, b| a.start.total_cmp(&b.start));
    out
}

/// `H` where the run is flattest, nearest its middle on ties. Near an
/// attracting end the grid values creep away from the plateau value.
fn flattest(vals: &[f64]) -> f64 {
    if vals.len() < 3 {
        return vals[0];
    }
    let center = (vals.len() - 1) as f64 / 2.0;
    let spread = |i: usize| (vals[i + 1] - vals[i - 1]).abs();
    let k = (1..vals.len() - 1)
        .min_by(|&i, &j| {
            spread(i)
                .total_cmp(&spread(j))
                .then((i as f64 - center).abs().total_cmp(&(j as f64 - center).abs()))
        })
        .expect("run has interior samples");
    vals[k]
}

// ---------------------------------------------------------------------------
// Points of the model map

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointKind {
    Periodic { period: usize },
    Preperiodic { depth: usize, period: usize },
    /// No periodic image found within the resolution limits.
    Wandering,
}

/// Orbit type of angle `z` under `t -> d t`.
///
/// Periodic when `d^n z` returns within `tol` for some `n <= max_period`.
/// Preperiodic when `z` lies within `tol` of a preimage of depth at most
/// `max_depth` of such a point, restricted to candidate sets coarse enough
/// that a chance hit at this `tol` is unlikely.
pub fn classify_circle_point(z: f64, d: i64, max_period: usize, max_depth: usize, tol: f64) -> PointKind {
    let z = wrap(z);
    let df = d as f64;
    let mut y = z;
    for n in 1..=max_period {
        y = wrap(df * y);
        if circle_dist(y, z) <= tol {
            return PointKind::Periodic { period: n };
        }
    }
    let cap = 1.0 / (1.0e4 * tol);
    let da = d.unsigned_abs() as f64;
    for depth in 1..=max_depth {
        for period in 1..=max_period {
            let q = (df.powi(period as i32) - 1.0).abs() * da.powi(depth as i32);
            if q > cap {
                break;
            }
            let cand = (z * q).round() / q;
            if circle_dist(cand, z) > tol {
                continue;
            }
            // exact check on the candidate p / q
            let (p, qi) = ((z * q).round() as u64 % q as u64, q as u64);
            if let Some(kind) = exact_kind(p, qi, d, max_period, max_depth) {
                if matches!(kind, PointKind::Preperiodic { .. }) {
                    return kind;
                }
            }
        }
    }
    PointKind::Wandering
}

fn exact_kind(p: u64, q: u64, d: i64, max_period: usize, max_depth: usize) -> Option<PointKind> {
    let dm = d.rem_euclid(q as i64) as u64;
    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut a = p % q;
    for step in 0..=(max_depth + max_period) {
        if let Some(&first) = seen.get(&a) {
            let period = step - first;
            return Some(if first == 0 {
                PointKind::Periodic { period }
            } else {
                PointKind::Preperiodic { depth: first, period }
            });
        }
        seen.insert(a, step);
        a = ((a as u128 * dm as u128) % q as u128) as u64;
    }
    None
}

// ---------------------------------------------------------------------------
// Interval signatures

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "count", rename_all = "snake_case")]
pub enum FixedPoints {
    Count(usize),
    /// `F^n - id` vanishes to tolerance on the whole interval.
    IdentityLike,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointBehavior {
    Attracting,
    Repelling,
}

/// Computable stand-in for the conjugacy class of the return map on a
/// periodic interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntervalSignature {
    /// Sign of `d^n`.
    pub orientation: i8,
    pub fixed_points: FixedPoints,
    /// Signs of `F^n - id`: left of the interval, between consecutive fixed
    /// points, right of the interval.
    pub sign_pattern: Vec<i8>,
    /// Behavior of the left and right end seen from inside.
    pub endpoint_behavior: Vec<EndpointBehavior>,
}

impl IntervalSignature {
    pub fn identity_class() -> Self {
        Self {
            orientation: 1,
            fixed_points: FixedPoints::IdentityLike,
            sign_pattern: Vec::new(),
            endpoint_behavior: Vec::new(),
        }
    }

    fn unresolved(orientation: i8) -> Self {
        Self {
            orientation,
            fixed_points: FixedPoints::Unresolved,
            sign_pattern: Vec::new(),
            endpoint_behavior: Vec::new(),
        }
    }

    /// Signature after conjugating by an orientation-reversing map.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.sign_pattern = self.sign_pattern.iter().rev().map(|s| -s).collect();
        out.endpoint_behavior.reverse();
        out
    }

    /// The signature a blow-up with this insert produces.
    pub fn of_insert(kind: InsertKind) -> Self {
        use EndpointBehavior::*;
        let (count, pattern, ends) = match kind {
            InsertKind::Identity => return Self::identity_class(),
            InsertKind::NorthSouth => (3, vec![-1, 1, -1, 1], vec![Repelling, Repelling]),
            InsertKind::SouthNorth => (3, vec![-1, -1, 1, 1], vec![Attracting, Attracting]),
            InsertKind::Drift => (2, vec![-1, 1, 1], vec![Repelling, Attracting]),
            InsertKind::DriftBack => (2, vec![-1, -1, 1], vec![Attracting, Repelling]),
        };
        Self {
            orientation: 1,
            fixed_points: FixedPoints::Count(count),
            sign_pattern: pattern,
            endpoint_behavior: ends,
        }
    }
}

fn sign_of(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

/// Signature of `F^period` on the plateau `[a, b]`.
///
/// The ends of a periodic plateau are fixed by `F^period`; interior fixed
/// points are located on the map grid from `a + 4h` to `b - 4h`, and the
/// outer signs are read just outside.
pub fn interval_signature(map: &LiftedCircleMap, interval: [f64; 2], period: usize, tol: f64) -> Result<IntervalSignature> {
    let [a, b] = interval;
    let p = period.max(1);
    let h = 1.0 / map.cells() as f64;
    let d = map.degree();
    let orientation: i8 = if d < 0 && p % 2 == 1 { -1 } else { 1 };
    let raw = |x: f64| map.iterate(x, p) - x;
    let growth = (d.unsigned_abs() as f64).powi(p as i32);
    let inv_tol = tol + 4.0 * h * (growth + 1.0);
    let not_invariant = || Error::NotInvariant { a, b, period: p };

    let mid = 0.5 * (a + b);
    if orientation > 0 {
        let k = raw(mid).round();
        if (raw(a) - k).abs() > inv_tol || (raw(b) - k).abs() > inv_tol {
            return Err(not_invariant());
        }
    } else {
        let swap = |x: f64, y: f64| {
            let v = map.iterate(x, p) - y;
            (v - v.round()).abs()
        };
        if swap(a, b) > inv_tol || swap(b, a) > inv_tol {
            return Err(not_invariant());
        }
    }
    let k = raw(mid).round();
    let g = |x: f64| raw(x) - k;

    let i0 = ((a / h).round() as i64) + 4;
    let i1 = ((b / h).round() as i64) - 4;
    if i1 - i0 < 2 {
        return Ok(IntervalSignature::unresolved(orientation));
    }
    let vals: Vec<f64> = (i0..=i1).map(|i| g(i as f64 * h)).collect();
    if vals.iter().all(|v| v.abs() <= tol) {
        return Ok(IntervalSignature {
            orientation,
            ..IntervalSignature::identity_class()
        });
    }
    let signs: Vec<i8> = vals.iter().map(|&v| sign_of(v, tol)).collect();
    if signs[0] == 0 || signs[signs.len() - 1] == 0 {
        return Ok(IntervalSignature::unresolved(orientation));
    }

    // walk the samples: each sign change or isolated zero run is a root
    let mut inner = vec![signs[0]];
    let mut roots: Vec<usize> = Vec::new();
    let mut i = 1;
    while i < signs.len() {
        if signs[i] == 0 {
            let mut j = i;
            while signs[j] == 0 {
                j += 1;
            }
            if j - i > 2 {
                return Ok(IntervalSignature::unresolved(orientation));
            }
            roots.push(i);
            inner.push(signs[j]);
            i = j + 1;
        } else {
            if signs[i] != signs[i - 1] {
                roots.push(i);
                inner.push(signs[i]);
            }
            i += 1;
        }
    }
    if roots.windows(2).any(|w| w[1] - w[0] < 2) {
        return Ok(IntervalSignature::unresolved(orientation));
    }

    if orientation < 0 {
        return Ok(IntervalSignature {
            orientation,
            fixed_points: FixedPoints::Count(roots.len()),
            sign_pattern: inner,
            endpoint_behavior: Vec::new(),
        });
    }
    let outer_left = sign_of(g(a - 2.0 * h), tol);
    let outer_right = sign_of(g(b + 2.0 * h), tol);
    if outer_left == 0 || outer_right == 0 {
        return Ok(IntervalSignature::unresolved(orientation));
    }
    let ends = vec![
        if inner[0] < 0 {
            EndpointBehavior::Attracting
        } else {
            EndpointBehavior::Repelling
        },
        if inner[inner.len() - 1] > 0 {
            EndpointBehavior::Attracting
        } else {
            EndpointBehavior::Repelling
        },
    ];
    let mut pattern = vec![outer_left];
    pattern.extend(&inner);
    pattern.push(outer_right);
    Ok(IntervalSignature {
        orientation,
        fixed_points: FixedPoints::Count(roots.len() + 2),
        sign_pattern: pattern,
        endpoint_behavior: ends,
    })
}

// ---------------------------------------------------------------------------
// Classification data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    /// Solver tolerance for `H`.
    pub tol: f64,
    /// Defaults to `2 / N`.
    pub plateau_tol: Option<f64>,
    pub min_cells: usize,
    /// Records with fewer cells may go unmatched in comparisons.
    pub confident_cells: usize,
    pub max_period: usize,
    pub max_depth: usize,
    /// Tolerance for deciding the orbit type of a plateau angle.
    pub kind_tol: f64,
    /// Zero threshold for `F^n - id` in signatures.
    pub signature_tol: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            plateau_tol: None,
            min_cells: DEFAULT_MIN_CELLS,
            confident_cells: 8,
            max_period: 8,
            max_depth: 12,
            kind_tol: 1e-7,
            signature_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauRecord {
    pub angle: f64,
    pub start: f64,
    pub end: f64,
    pub cells: usize,
    pub kind: PointKind,
    pub signature: IntervalSignature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationData {
    pub degree: i64,
    pub records: Vec<PlateauRecord>,
    pub grid: usize,
    pub tol: f64,
    pub max_period: usize,
    pub confident_cells: usize,
}

pub fn classification_data(map: &LiftedCircleMap, params: &ClassifyParams) -> Result<ClassificationData> {
    if !map.is_covering() {
        return Err(Error::NotACovering);
    }
    let h = semiconj1d::solve_semiconjugacy(
        map,
        Orientation::Preserving,
        params.tol,
        semiconj1d::default_max_iter(map.degree(), params.tol),
    )?;
    let tol = params.plateau_tol.unwrap_or(2.0 / h.cells() as f64);
    let mut records = Vec::new();
    for pl in plateau_set_with(&h, tol, params.min_cells) {
        let kind = classify_circle_point(pl.value, map.degree(), params.max_period, params.max_depth, params.kind_tol);
        let signature = match kind {
            PointKind::Periodic { period } => interval_signature(map, [pl.start, pl.end], period, params.signature_tol)?,
            _ => IntervalSignature::identity_class(),
        };
        records.push(PlateauRecord {
            angle: pl.value,
            start: pl.start,
            end: pl.end,
            cells: pl.cells,
            kind,
            signature,
        });
    }
    Ok(ClassificationData {
        degree: map.degree(),
        records,
        grid: map.cells(),
        tol: params.tol,
        max_period: params.max_period,
        confident_cells: params.confident_cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "detail", rename_all = "snake_case")]
pub enum Verdict {
    Equivalent(SelfConjugacy),
    Distinct(String),
    Inconclusive(String),
}

enum Attempt {
    Match { unresolved: bool },
    Fail { matched: usize, reason: String, resolution_limited: bool },
}

fn attempt(a: &ClassificationData, b: &ClassificationData, c: &SelfConjugacy, tol: f64) -> Attempt {
    let mut matched = 0;
    let mut unresolved = false;
    let moved: Vec<(f64, IntervalSignature)> = b
        .records
        .iter()
        .map(|r| {
            let sig = if c.reflect { r.signature.reversed() } else { r.signature.clone() };
            (c.apply(r.angle), sig)
        })
        .collect();
    let nearest = |angle: f64, set: &mut dyn Iterator<Item = (usize, f64)>| {
        set.map(|(i, t)| (i, circle_dist(angle, t)))
            .filter(|&(_, dist)| dist <= tol)
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(i, _)| i)
    };
    for (j, rb) in b.records.iter().enumerate() {
        let partner = nearest(moved[j].0, &mut a.records.iter().map(|r| r.angle).enumerate());
        let Some(i) = partner else {
            if rb.cells >= b.confident_cells {
                return Attempt::Fail {
                    matched,
                    reason: format!("record at angle {:.6} has no partner", moved[j].0),
                    resolution_limited: false,
                };
            }
            continue;
        };
        let ra = &a.records[i];
        if ra.kind != rb.kind {
            if ra.cells < a.confident_cells || rb.cells < b.confident_cells {
                continue;
            }
            let limited = matches!(ra.kind, PointKind::Wandering) || matches!(rb.kind, PointKind::Wandering);
            return Attempt::Fail {
                matched,
                reason: format!("orbit type mismatch at angle {:.6}", ra.angle),
                resolution_limited: limited,
            };
        }
        let (sa, sb) = (&ra.signature, &moved[j].1);
        if sa.fixed_points == FixedPoints::Unresolved || sb.fixed_points == FixedPoints::Unresolved {
            unresolved = true;
        } else if sa != sb {
            return Attempt::Fail {
                matched,
                reason: format!("signature mismatch at angle {:.6}", ra.angle),
                resolution_limited: false,
            };
        }
        matched += 1;
    }
    let inv = c.inverse();
    for ra in &a.records {
        if ra.cells < a.confident_cells {
            continue;
        }
        let back = inv.apply(ra.angle);
        if nearest(back, &mut b.records.iter().map(|r| r.angle).enumerate()).is_none() {
            return Attempt::Fail {
                matched,
                reason: format!("record at angle {:.6} has no partner", ra.angle),
                resolution_limited: false,
            };
        }
    }
    Attempt::Match { unresolved }
}

/// Compares two classification data up to the self-conjugacies of `z^d`.
pub fn compare_classification(a: &ClassificationData, b: &ClassificationData, tol: f64) -> Verdict {
    if a.degree != b.degree {
        return Verdict::Distinct(format!("degrees differ: {} vs {}", a.degree, b.degree));
    }
    let group = semiconj1d::self_conjugacies(a.degree).expect("degree validated by the maps");
    let mut inconclusive: Option<String> = None;
    let mut best: Option<(usize, String)> = None;
    for c in &group {
        match attempt(a, b, c, tol) {
            Attempt::Match { unresolved: false } => return Verdict::Equivalent(*c),
            Attempt::Match { unresolved: true } => {
                inconclusive.get_or_insert_with(|| "unresolved interval signature".into());
            }
            Attempt::Fail {
                matched,
                reason,
                resolution_limited,
            } => {
                if resolution_limited {
                    inconclusive.get_or_insert_with(|| format!("{reason} (resolution limited)"));
                }
                if best.as_ref().is_none_or(|(m, _)| matched > *m) {
                    best = Some((matched, reason));
                }
            }
        }
    }
    if let Some(r) = inconclusive {
        return Verdict::Inconclusive(r);
    }
    Verdict::Distinct(best.map(|b| b.1).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ins(angle: &str, length: f64, kind: InsertKind) -> Insertion {
        Insertion {
            angle: BaseAngle::Ratio(angle.into()),
            length,
            kind,
        }
    }

    #[test]
    fn no_insertions_is_the_model() {
        let m = blow_up(&BlowUpSpec::new(2, vec![]), 256).unwrap();
        let model = LiftedCircleMap::model(2, 256).unwrap();
        assert_eq!(m.samples(), model.samples());
    }

    #[test]
    fn angle_parsing() {
        assert!(matches!(BaseAngle::Value(0.1).parse().unwrap(), ParsedAngle::Rational(1, 10)));
        assert!(matches!(BaseAngle::Ratio("2/6".into()).parse().unwrap(), ParsedAngle::Rational(1, 3)));
        assert!(matches!(
            BaseAngle::Value((0.1 * 2f64.sqrt()).fract()).parse().unwrap(),
            ParsedAngle::Real(_)
        ));
        assert!(BaseAngle::Ratio("x".into()).value().is_err());
    }

    #[test]
    fn exact_blow_up_is_monotone_and_semiconjugate() {
        let spec = BlowUpSpec::new(2, vec![ins("0/1", 0.1, InsertKind::NorthSouth), ins("1/10", 0.05, InsertKind::Identity)]);
        let b = BlowUp::new(&spec, 4096).unwrap();
        let mut prev = b.eval(0.0);
        for i in 1..=20_000 {
            let x = i as f64 / 20_000.0;
            let v = b.eval(x);
            assert!(v >= prev, "not monotone at {x}");
            prev = v;
            // H F = d H for the collapse map
            let lhs = b.collapse(v);
            let rhs = 2.0 * b.collapse(x);
            assert!((lhs - rhs).abs() < 1e-6, "x={x}: {lhs} vs {rhs}");
        }
        assert!((b.eval(1.0) - b.eval(0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn blow_up_errors() {
        let e = BlowUp::new(&BlowUpSpec::new(2, vec![ins("0/1", 0.6, InsertKind::Identity), ins("1/3", 0.5, InsertKind::Identity)]), 1024);
        assert!(matches!(e, Err(Error::Overfull { .. })));
        let e = BlowUp::new(&BlowUpSpec::new(2, vec![ins("0/1", 0.3, InsertKind::Identity), ins("1/3", 0.3, InsertKind::Identity)]), 1024);
        assert!(matches!(e, Err(Error::Overfull { .. })));
        let e = BlowUp::new(&BlowUpSpec::new(2, vec![ins("0/1", 0.05, InsertKind::Identity), ins("1/2", 0.05, InsertKind::Identity)]), 1024);
        assert!(matches!(e, Err(Error::Clash { .. })));
        let e = BlowUp::new(&BlowUpSpec::new(-2, vec![]), 1024);
        assert!(matches!(e, Err(Error::UnsupportedDegree { degree: -2 })));
    }

    #[test]
    fn plateau_of_centred_insertion() {
        let mut spec = BlowUpSpec::new(2, vec![ins("0/1", 0.1, InsertKind::NorthSouth)]);
        spec.offset = 0.45;
        let map = blow_up(&spec, 4096).unwrap();
        let h = semiconj1d::solve_semiconjugacy(&map, Orientation::Preserving, 1e-11, 100).unwrap();
        let pls = plateau_set(&h, None);
        let main: Vec<_> = pls.iter().filter(|p| p.length() > 0.05).collect();
        assert_eq!(main.len(), 1);
        assert!((main[0].start - 0.45).abs() < 1e-3, "{:?}", main[0]);
        assert!((main[0].end - 0.55).abs() < 1e-3, "{:?}", main[0]);
        let id = SemiconjugacyField1D::linear(Orientation::Preserving, 2, 4096);
        assert!(plateau_set(&id, None).is_empty());
    }

    #[test]
    fn plateau_across_zero() {
        let map = blow_up(&BlowUpSpec::new(2, vec![ins("0/1", 0.1, InsertKind::Identity)]), 1024).unwrap();
        let h = semiconj1d::solve_semiconjugacy(&map, Orientation::Preserving, 1e-11, 100).unwrap();
        let mut spec = BlowUpSpec::new(2, vec![ins("0/1", 0.1, InsertKind::Identity)]);
        spec.offset = -0.05;
        let shifted = blow_up(&spec, 1024).unwrap();
        let hs = semiconj1d::solve_semiconjugacy(&shifted, Orientation::Preserving, 1e-11, 100).unwrap();
        let big = |h| plateau_set(h, None).into_iter().filter(|p| p.length() > 0.05).collect::<Vec<_>>();
        assert_eq!(big(&h).len(), 1);
        let across = big(&hs);
        assert_eq!(across.len(), 1);
        assert!(across[0].end > 1.0);
        assert!(circle_dist(across[0].value, 0.0) < 1e-9);
    }

    #[test]
    fn point_kinds() {
        assert_eq!(classify_circle_point(0.0, 2, 8, 12, 1e-9), PointKind::Periodic { period: 1 });
        assert_eq!(classify_circle_point(1.0 / 3.0, 2, 8, 12, 1e-9), PointKind::Periodic { period: 2 });
        assert_eq!(
            classify_circle_point(0.1, 2, 8, 12, 1e-9),
            PointKind::Preperiodic { depth: 1, period: 4 }
        );
        assert_eq!(classify_circle_point((0.1 * 2f64.sqrt()).fract(), 2, 8, 12, 1e-9), PointKind::Wandering);
        assert_eq!(classify_circle_point(0.5, 3, 8, 12, 1e-9), PointKind::Periodic { period: 1 });
    }

    #[test]
    fn signatures_of_inserts() {
        for kind in [
            InsertKind::NorthSouth,
            InsertKind::SouthNorth,
            InsertKind::Drift,
            InsertKind::DriftBack,
            InsertKind::Identity,
        ] {
            let mut spec = BlowUpSpec::new(2, vec![ins("0/1", 0.1, kind)]);
            spec.offset = 0.45;
            let map = blow_up(&spec, 4096).unwrap();
            let sig = interval_signature(&map, [0.45, 0.55], 1, 1e-9).unwrap();
            assert_eq!(sig, IntervalSignature::of_insert(kind), "{kind:?}");
            assert_eq!(IntervalSignature::of_insert(kind).reversed(), IntervalSignature::of_insert(kind.reversed()));
        }
    }

    #[test]
    fn blow_up_fixed_points() {
        let mut spec = BlowUpSpec::new(2, vec![ins("0/1", 0.1, InsertKind::NorthSouth)]);
        spec.offset = 0.45;
        let map = blow_up(&spec, 4096).unwrap();
        let pts = crate::circle::find_periodic_points(&map, 1, 1e-12).unwrap();
        let near = |t: f64| pts.iter().any(|p| (p.angle - t).abs() < 1e-3);
        assert!(near(0.45) && near(0.5) && near(0.55));
        assert_eq!(pts.len(), 3);
    }

    #[test]
    fn wandering_plateau_is_not_invariant() {
        let spec = BlowUpSpec::new(
            2,
            vec![Insertion {
                angle: BaseAngle::Value((0.1 * 2f64.sqrt()).fract()),
                length: 0.1,
                kind: InsertKind::Identity,
            }],
        );
        let map = blow_up(&spec, 4096).unwrap();
        let h = semiconj1d::solve_semiconjugacy(&map, Orientation::Preserving, 1e-11, 100).unwrap();
        let pl = plateau_set(&h, None);
        let main = pl.iter().find(|p| p.length() > 0.05).unwrap();
        assert!(matches!(
            interval_signature(&map, [main.start, main.end], 1, 1e-9),
            Err(Error::NotInvariant { .. })
        ));
        let data = classification_data(&map, &ClassifyParams::default()).unwrap();
        assert!(data.records.iter().all(|r| r.kind == PointKind::Wandering));
        assert!(data.records.len() >= 2);
    }

    #[test]
    fn classification_examples() {
        let model = LiftedCircleMap::model(2, 1024).unwrap();
        let d = classification_data(&model, &ClassifyParams::default()).unwrap();
        assert!(d.records.is_empty());
        assert_eq!(compare_classification(&d, &d, 1e-3), Verdict::Equivalent(SelfConjugacy::identity(2)));

        let map = blow_up(&BlowUpSpec::new(2, vec![ins("0/1", 0.1, InsertKind::NorthSouth)]), 4096).unwrap();
        let data = classification_data(&map, &ClassifyParams::default()).unwrap();
        let rec = data.records.iter().find(|r| circle_dist(r.angle, 0.0) < 1e-6).unwrap();
        assert_eq!(rec.kind, PointKind::Periodic { period: 1 });
        assert_eq!(rec.signature, IntervalSignature::of_insert(InsertKind::NorthSouth));

        let pre = blow_up(&BlowUpSpec::new(2, vec![ins("1/10", 0.04, InsertKind::Identity)]), 4096).unwrap();
        let data = classification_data(&pre, &ClassifyParams::default()).unwrap();
        let rec = data.records.iter().find(|r| circle_dist(r.angle, 0.1) < 1e-6).unwrap();
        assert!(matches!(rec.kind, PointKind::Preperiodic { .. }));
        assert!(data.records.iter().any(|r| r.kind == PointKind::Periodic { period: 4 }));
    }

    #[test]
    fn comparison_examples() {
        let cls = |spec: &BlowUpSpec| classification_data(&blow_up(spec, 4096).unwrap(), &ClassifyParams::default()).unwrap();
        let a = cls(&BlowUpSpec::new(3, vec![ins("0/1", 0.08, InsertKind::NorthSouth)]));
        let b = cls(&BlowUpSpec::new(3, vec![ins("1/2", 0.08, InsertKind::NorthSouth)]));
        match compare_classification(&a, &b, 1e-3) {
            Verdict::Equivalent(c) => assert_eq!((c.rotation_index, c.reflect), (1, false)),
            v => panic!("{v:?}"),
        }
        let c = cls(&BlowUpSpec::new(3, vec![ins("0/1", 0.08, InsertKind::Identity)]));
        assert!(matches!(compare_classification(&a, &c, 1e-3), Verdict::Distinct(r) if r.contains("signature")));
        let m2 = classification_data(&LiftedCircleMap::model(2, 1024).unwrap(), &ClassifyParams::default()).unwrap();
        assert!(matches!(compare_classification(&a, &m2, 1e-3), Verdict::Distinct(_)));
    }
}
