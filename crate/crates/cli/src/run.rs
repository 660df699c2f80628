//! Dispatch from a validated config to the library.

use std::io::Write;

use semicov_core::annulus::AnnulusMapLift;
use semicov_core::circle::{CircleFamily, LiftedCircleMap};
use semicov_core::classify::{classification_data, compare_classification, ClassificationData, ClassifyParams, Verdict};
use semicov_core::connectors::{
    image_gap, invariant_connector_from_arc, preimage_connectors, repelling_connectors,
    semiconjugacy_from_repellers, ConnectorCurve, RepellerSet, DEFAULT_MARGIN,
};
use semicov_core::obstruction::{counterexample_growth_table, star_condition_scan, LoopSpec};
use semicov_core::semiconj1d::{default_max_iter, rotation_number, solve_semiconjugacy, Orientation};
use semicov_core::semiconj2d::{solve_band_semiconjugacy, solve_bounded_semiconjugacy, BandField2D, BandGrid};
use semicov_core::stability::{perturb_p2, verify_perturbation, EpsilonSpec};
use serde::Serialize;

use crate::artifacts::{self, num, Meta};
use crate::config::{Command, ConfigError, ConnectorConfig, RunConfig};

/// Angle tolerance when matching plateau records.
const MATCH_TOL: f64 = 1e-3;
/// Margin for connectors grown from an arc; small so orbits can be followed far.
const ARC_MARGIN: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] semicov_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// 0 success, 1 negative verdict, 2 inconclusive.
    pub code: i32,
    pub artifact: String,
    /// One human-readable line for stderr.
    pub summary: String,
}

impl Outcome {
    fn ok(artifact: String, summary: String) -> Self {
        Self { code: 0, artifact, summary }
    }

    /// Writes the artifact to `out`, or to stdout when absent.
    pub fn deliver(&self, out: Option<&std::path::Path>) -> Result<(), RunError> {
        match out {
            Some(p) => std::fs::write(p, &self.artifact)?,
            None => std::io::stdout().lock().write_all(self.artifact.as_bytes())?,
        }
        Ok(())
    }
}

fn meta(cfg: &RunConfig) -> Meta {
    Meta {
        tool: "semicov",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.name(),
        config_hash: cfg.hash(),
        tol: cfg.tol,
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    match cfg.command {
        Command::Semiconj1d => semiconj1d(cfg),
        Command::Rotation => rotation(cfg),
        Command::Classify => classify(cfg),
        Command::Compare => compare(cfg),
        Command::Semiconj2d => semiconj2d(cfg),
        Command::Repellers => repellers(cfg),
        Command::StarScan => star_scan(cfg),
        Command::CounterexampleTable => counterexample_table(cfg),
        Command::Perturb => perturb(cfg),
    }
}

fn circle(cfg: &RunConfig, family: &Option<CircleFamily>) -> Result<LiftedCircleMap, RunError> {
    let f = family.as_ref().expect("validated");
    Ok(LiftedCircleMap::from_family(f, cfg.cells)?)
}

fn semiconj1d(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let map = circle(cfg, &cfg.circle)?;
    let o = cfg.orientation.unwrap_or(Orientation::Preserving);
    let max_iter = cfg.max_iter.unwrap_or_else(|| default_max_iter(map.degree(), cfg.tol));
    let h = solve_semiconjugacy(&map, o, cfg.tol, max_iter)?;
    let rows: Vec<Vec<String>> = (0..=map.cells())
        .map(|i| {
            let x = i as f64 / map.cells() as f64;
            vec![num(x), num(h.samples()[i]), num(h.angle(x))]
        })
        .collect();
    let summary = format!(
        "degree {} iterations {} residual {:e} off-grid residual {:e}",
        map.degree(),
        h.iterations,
        h.residual,
        h.off_grid_residual
    );
    Ok(Outcome::ok(artifacts::csv(&meta(cfg), &["x", "value", "angle"], &rows), summary))
}

#[derive(Serialize)]
struct RotationRow {
    x: f64,
    rotation_number: f64,
    angle: f64,
}

fn rotation(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let map = circle(cfg, &cfg.circle)?;
    let points = cfg.points.clone().unwrap_or_else(|| vec![0.0]);
    let rows = points
        .iter()
        .map(|&x| {
            let r = rotation_number(&map, x)?;
            Ok(RotationRow {
                x,
                rotation_number: r,
                angle: semicov_core::wrap(r),
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let summary = format!("{} rotation numbers", rows.len());
    Ok(Outcome::ok(artifacts::json(&meta(cfg), &rows), summary))
}

fn classify_params(cfg: &RunConfig) -> ClassifyParams {
    let mut p = ClassifyParams::default();
    p.tol = p.tol.min(cfg.tol);
    p
}

fn classify_one(cfg: &RunConfig, family: &Option<CircleFamily>) -> Result<ClassificationData, RunError> {
    let map = circle(cfg, family)?;
    Ok(classification_data(&map, &classify_params(cfg))?)
}

fn classify(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let data = classify_one(cfg, &cfg.circle)?;
    let summary = format!("degree {} with {} plateau records", data.degree, data.records.len());
    Ok(Outcome::ok(artifacts::json(&meta(cfg), &data), summary))
}

fn compare(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let a = classify_one(cfg, &cfg.circle)?;
    let b = classify_one(cfg, &cfg.other)?;
    let verdict = compare_classification(&a, &b, MATCH_TOL);
    let (code, summary) = match &verdict {
        Verdict::Equivalent(c) => (0, format!("equivalent under {c:?}")),
        Verdict::Distinct(r) => (1, format!("distinct: {r}")),
        Verdict::Inconclusive(r) => (2, format!("inconclusive: {r}")),
    };
    Ok(Outcome {
        code,
        artifact: artifacts::json(&meta(cfg), &verdict),
        summary,
    })
}

fn annulus(cfg: &RunConfig) -> Result<AnnulusMapLift, RunError> {
    Ok(AnnulusMapLift::from_spec(cfg.annulus.as_ref().expect("validated"))?)
}

fn grid(cfg: &RunConfig) -> BandGrid {
    cfg.grid.map_or_else(BandGrid::default, |[nx, ny]| BandGrid { nx, ny })
}

fn band(cfg: &RunConfig) -> Option<[f64; 2]> {
    cfg.band.or_else(|| cfg.annulus.as_ref().and_then(|a| a.band))
}

fn field_rows(h: &BandField2D) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity((h.nx + 1) * (h.ny + 1));
    for i in 0..=h.nx {
        for j in 0..=h.ny {
            rows.push(vec![num(h.x_at(i)), num(j as f64 / h.ny as f64), num(h.sample(i, j))]);
        }
    }
    rows
}

/// A free connector: the configured one, or a free component of its preimage.
fn free_connector(map: &AnnulusMapLift, cfg: &ConnectorConfig, samples: usize) -> Result<ConnectorCurve, RunError> {
    let c = match cfg {
        ConnectorConfig::Level { height } => ConnectorCurve::constant(*height, DEFAULT_MARGIN, samples)?,
        ConnectorConfig::Arc { start, n_back, n_fwd } => {
            invariant_connector_from_arc(map, (start[0], start[1]), *n_back, *n_fwd, 64, ARC_MARGIN)?.curve
        }
    };
    if image_gap(map, &c)?.is_none_or(|g| g > 1e-9) {
        return Ok(c);
    }
    let mut best: Option<(f64, ConnectorCurve)> = None;
    for comp in preimage_connectors(map, &c)? {
        if let Some(g) = image_gap(map, &comp)? {
            if best.as_ref().is_none_or(|(b, _)| g > *b) {
                best = Some((g, comp));
            }
        }
    }
    match best {
        Some((g, comp)) if g > 1e-9 => Ok(comp),
        Some((g, _)) => Err(semicov_core::Error::NotFree { distance: g }.into()),
        None => Err(semicov_core::Error::NotFree { distance: 0.0 }.into()),
    }
}

const REPELLER_DEPTH: usize = 10;
const CODING_DEPTH: usize = 12;

fn repeller_set(cfg: &RunConfig, map: &AnnulusMapLift) -> Result<RepellerSet, RunError> {
    let c = free_connector(map, cfg.connector.as_ref().expect("validated"), cfg.samples.unwrap_or(256))?;
    Ok(repelling_connectors(map, &c, cfg.depth.unwrap_or(REPELLER_DEPTH))?)
}

fn semiconj2d(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let map = annulus(cfg)?;
    let g = grid(cfg);
    let max_iter = cfg.max_iter.unwrap_or(500);
    let (h, how) = match (band(cfg), &cfg.connector) {
        (Some(b), Some(_)) => {
            let set = repeller_set(cfg, &map)?;
            let rf = semiconjugacy_from_repellers(&map, &set, CODING_DEPTH, b, g)?;
            (rf.field, "repeller coding")
        }
        (Some(b), None) => (solve_band_semiconjugacy(&map, b, cfg.tol, max_iter, g)?, "invariant band"),
        (None, _) => (solve_bounded_semiconjugacy(&map, cfg.tol, max_iter, g)?.field, "bounded displacement"),
    };
    let summary = format!(
        "{how}: residual {:e} off-grid residual {:e} deviation bound {}",
        h.residual, h.off_grid_residual, h.deviation_bound
    );
    Ok(Outcome::ok(artifacts::csv(&meta(cfg), &["x", "y", "value"], &field_rows(&h)), summary))
}

fn repellers(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let map = annulus(cfg)?;
    let set = repeller_set(cfg, &map)?;
    let mut rows = Vec::new();
    for (id, r) in set.repellers.iter().enumerate() {
        for (&x, &y) in r.curve.xs().iter().zip(r.curve.heights()) {
            rows.push(vec![id.to_string(), num(x), num(y)]);
        }
    }
    let gaps: Vec<String> = set
        .repellers
        .iter()
        .map(|r| format!("{:e}", r.depth_gaps.last().copied().unwrap_or(f64::NAN)))
        .collect();
    let summary = format!(
        "{} repellers at depth {}, expansion {}, final gaps [{}]",
        set.repellers.len(),
        set.depth,
        set.expansion,
        gaps.join(", ")
    );
    Ok(Outcome::ok(artifacts::csv(&meta(cfg), &["curve_id", "x", "y"], &rows), summary))
}

#[derive(Serialize)]
struct StarScanResult {
    deviation_source: &'static str,
    report: semicov_core::obstruction::WindingReport,
}

fn star_scan(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let map = annulus(cfg)?;
    let k = band(cfg).unwrap_or([0.1, 0.9]);
    let g = grid(cfg);
    let (m, source) = if cfg.connector.is_some() {
        let set = repeller_set(cfg, &map)?;
        let rf = semiconjugacy_from_repellers(&map, &set, CODING_DEPTH, k, g)?;
        (rf.field.deviation_bound, "repeller coding")
    } else {
        match solve_band_semiconjugacy(&map, k, cfg.tol, cfg.max_iter.unwrap_or(500), g) {
            Ok(h) => (h.deviation_bound, "invariant band"),
            Err(semicov_core::Error::BandNotInvariant { .. }) => {
                let h = solve_bounded_semiconjugacy(&map, cfg.tol, cfg.max_iter.unwrap_or(500), g)?;
                (h.field.deviation_bound, "bounded displacement")
            }
            Err(e) => return Err(e.into()),
        }
    };
    let alpha = cfg.loop_spec.clone().unwrap_or(LoopSpec::FiberCircle { x: 0.99, y: 0.0 });
    let report = star_condition_scan(&map, k, &alpha, cfg.nmax.unwrap_or(6), m)?;
    let worst = report.records.iter().map(|r| r.winding).max().unwrap_or(0);
    let summary = format!(
        "max winding {worst} against bound {} (M = {m}) over {} lifts",
        report.implied_bound,
        report.records.len()
    );
    let code = if report.holds { 0 } else { 1 };
    Ok(Outcome {
        code,
        artifact: artifacts::json(
            &meta(cfg),
            &StarScanResult {
                deviation_source: source,
                report,
            },
        ),
        summary,
    })
}

fn counterexample_table(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let table = counterexample_growth_table(cfg.nmax.unwrap_or(8));
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|m| {
            vec![
                m.n.to_string(),
                m.lower_bound.to_string(),
                num(m.x_prime.1),
                num(m.y_prime.1),
                m.check().to_string(),
            ]
        })
        .collect();
    let ok = table.iter().all(|m| m.check());
    let summary = format!("{} stages, lower bounds up to {}", table.len(), table.last().map_or(0, |m| m.lower_bound));
    Ok(Outcome {
        code: if ok { 0 } else { 1 },
        artifact: artifacts::csv(&meta(cfg), &["n", "lower_bound", "x_height", "y_height", "verified"], &rows),
        summary,
    })
}

fn perturb(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let eps = cfg.epsilon.clone().unwrap_or(EpsilonSpec::Constant { value: 0.1 });
    let (_, rho) = perturb_p2(&eps, 64)?;
    let report = verify_perturbation(&eps, &rho, cfg.samples.unwrap_or(100_000), cfg.width.unwrap_or(0.01))?;
    let ok = report.sup_ratio < 1.0 && report.invariant_fraction == 1.0 && report.injectivity.holds;
    let summary = format!(
        "sup ratio {} invariant fraction {} injective {} non-injective after {} iterates",
        report.sup_ratio, report.invariant_fraction, report.injectivity.holds, report.noninjective_after
    );
    Ok(Outcome {
        code: if ok { 0 } else { 1 },
        artifact: artifacts::json(&meta(cfg), &report),
        summary,
    })
}
