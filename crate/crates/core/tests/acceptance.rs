//! The thirteen acceptance criteria at their pinned tolerances. Prints one
//! PASS/FAIL line each and exits non-zero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semicov_core::annulus::{AnnulusMapLift, BaseSpec, FiberSpec, TwistSpec};
use semicov_core::circle::{find_periodic_points, CircleFamily, LiftedCircleMap};
use semicov_core::classify::{
    blow_up, classification_data, compare_classification, BaseAngle, BlowUpSpec, ClassifyParams, InsertKind, Insertion,
    IntervalSignature, Verdict,
};
use semicov_core::connectors::{
    invariant_connector_from_arc, repelling_connectors, semiconjugacy_from_invariant_connector,
    semiconjugacy_from_repellers, ConnectorCurve, DEFAULT_MARGIN,
};
use semicov_core::obstruction::{counterexample_growth_table, star_condition_scan, LoopSpec};
use semicov_core::semiconj1d::{
    contraction_step, self_conjugacies, solve_semiconjugacy, Orientation, SelfConjugacy, SemiconjugacyField1D,
};
use semicov_core::semiconj2d::{check_fiber_connector, check_fiber_surjectivity, solve_band_semiconjugacy, BandGrid};
use semicov_core::stability::{perturb_p2, verify_perturbation, EpsilonSpec};
use semicov_core::{circle_dist, Result};

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lift<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| format!("error: {e}"))
}

fn sine(d: i64, amplitude: f64, cells: usize) -> Result<LiftedCircleMap> {
    LiftedCircleMap::from_family(&CircleFamily::Sine { degree: d, amplitude, shift: 0.0 }, cells)
}

fn operator_contraction() -> Outcome {
    let start = Instant::now();
    let n = 4096;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut bound_gap = f64::INFINITY;
    for d in [2i64, 3] {
        let map = lift(sine(d, 0.05, n))?;
        for _ in 0..20 {
            let mut field = || {
                let modes: Vec<(f64, f64)> = (1..=4).map(|_| (rng.gen_range(-0.3..0.3), rng.gen_range(0.0..1.0))).collect();
                let samples: Vec<f64> = (0..=n)
                    .map(|i| {
                        let x = i as f64 / n as f64;
                        x + modes
                            .iter()
                            .enumerate()
                            .map(|(k, (a, p))| a * (std::f64::consts::TAU * ((k + 1) as f64 * x + p)).sin())
                            .sum::<f64>()
                    })
                    .collect();
                SemiconjugacyField1D::from_samples(samples, Orientation::Preserving, d)
            };
            let (h1, h2) = (lift(field())?, lift(field())?);
            let (t1, t2) = (lift(contraction_step(&h1, &map))?, lift(contraction_step(&h2, &map))?);
            let ratio = t1.sup_distance(&t2) / h1.sup_distance(&h2);
            worst = worst.max(ratio);
            bound_gap = bound_gap.min(1.0 / d as f64 + 0.01 - ratio);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(bound_gap >= 0.0 && secs < 5.0, format!("worst ratio {worst:.4}, {secs:.2} s"))
}

fn model_fixed_point() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in [2i64, 3, -2, 4] {
        let map = lift(LiftedCircleMap::model(d, 4096))?;
        let o = if d > 0 { Orientation::Preserving } else { Orientation::Reversing };
        let h = lift(solve_semiconjugacy(&map, o, 1e-10, 200))?;
        let dev = h.deviation_bound();
        worst = worst.max(dev).max(h.residual);
    }
    ensure(worst <= 1e-9, format!("max of sup|H - id| and residual {worst:.2e}"))
}

fn shift_law() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in [2i64, 3, 4] {
        let map = lift(sine(d, 0.08, 4096))?;
        let h = lift(solve_semiconjugacy(&map, Orientation::Preserving, 1e-12, 400))?;
        let hs = lift(solve_semiconjugacy(&map.shifted(1), Orientation::Preserving, 1e-12, 400))?;
        for i in 0..1000 {
            let x = (i as f64 + 0.37) / 1000.0;
            worst = worst.max((hs.eval(x) - h.eval(x) - 1.0 / (d as f64 - 1.0)).abs());
        }
    }
    ensure(worst <= 1e-6, format!("max shift-law defect {worst:.2e}"))
}

fn affine_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for (d, c) in [(2i64, 0.3), (3, -0.45), (4, 0.1), (-2, 0.25), (5, 1.7)] {
        let map = lift(LiftedCircleMap::from_family(&CircleFamily::Linear { degree: d, shift: c }, 4096))?;
        let o = if d > 0 { Orientation::Preserving } else { Orientation::Reversing };
        let h = lift(solve_semiconjugacy(&map, o, 1e-11, 400))?;
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let want = o.sign() * x + o.sign() * c / (d as f64 - 1.0);
            worst = worst.max((h.eval(x) - want).abs());
        }
    }
    ensure(worst <= 1e-8, format!("max deviation from x + c/(d-1): {worst:.2e}"))
}

fn self_conjugacy_group() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for d in [2i64, 3, 4, -2, -3, 7] {
        let g = lift(self_conjugacies(d))?;
        ok &= g.len() as u64 == 2 * (d - 1).unsigned_abs();
        let defect = g.iter().map(|c| c.commutation_defect(d, 1000)).fold(0.0, f64::max);
        ok &= defect <= 1e-12;
        let id = SelfConjugacy::identity(d);
        for a in &g {
            ok &= a.compose(&id) == *a && id.compose(a) == *a;
            ok &= a.compose(&a.inverse()) == id;
            for b in &g {
                ok &= g.contains(&a.compose(b));
                for c in &g {
                    ok &= a.compose(&b.compose(c)) == a.compose(b).compose(c);
                }
                for i in 0..10 {
                    let t = i as f64 / 10.0 + 0.013;
                    ok &= circle_dist(a.compose(b).apply(t), a.apply(b.apply(t))) <= 1e-12;
                }
            }
        }
        notes.push(format!("|G_{d}|={}", g.len()));
    }
    ensure(ok, notes.join(" "))
}

fn insertion_angles(d: i64) -> Vec<Vec<&'static str>> {
    // periodic angles grouped by orbit
    match d {
        2 => vec![vec!["0/1"], vec!["1/3", "2/3"], vec!["1/7", "2/7", "4/7"]],
        _ => vec![vec!["0/1"], vec!["1/2"], vec!["1/8", "3/8"], vec!["1/4", "3/4"]],
    }
}

fn altered(kind: InsertKind) -> InsertKind {
    match kind {
        InsertKind::NorthSouth | InsertKind::Identity => InsertKind::Drift,
        InsertKind::SouthNorth => InsertKind::DriftBack,
        InsertKind::Drift => InsertKind::NorthSouth,
        InsertKind::DriftBack => InsertKind::SouthNorth,
    }
}

fn classification_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kinds = [
        InsertKind::NorthSouth,
        InsertKind::SouthNorth,
        InsertKind::Drift,
        InsertKind::DriftBack,
        InsertKind::Identity,
    ];
    let params = ClassifyParams::default();
    let cls = |spec: &BlowUpSpec| -> std::result::Result<_, String> {
        lift(blow_up(spec, 4096).and_then(|m| classification_data(&m, &params)))
    };
    let mut worst_angle: f64 = 0.0;
    for trial in 0..10 {
        let d = if trial % 2 == 0 { 2 } else { 3 };
        let mut orbits = insertion_angles(d);
        let count = rng.gen_range(1..=2);
        let mut insertions = Vec::new();
        for _ in 0..count {
            let orbit = orbits.remove(rng.gen_range(0..orbits.len()));
            let angle = orbit[rng.gen_range(0..orbit.len())];
            insertions.push(Insertion {
                angle: BaseAngle::Ratio(angle.into()),
                length: rng.gen_range(0.04..0.08),
                kind: kinds[rng.gen_range(0..kinds.len())],
            });
        }
        let mut spec = BlowUpSpec::new(d, insertions);
        spec.offset = rng.gen_range(0.0..1.0);
        let data = cls(&spec).map_err(|e| format!("{e} for {spec:?}"))?;
        for ins in &spec.insertions {
            let a = lift(ins.angle.value())?;
            let Some(rec) = data.records.iter().min_by(|x, y| circle_dist(x.angle, a).total_cmp(&circle_dist(y.angle, a))) else {
                return Err(format!("trial {trial}: no records"));
            };
            let err = circle_dist(rec.angle, a);
            worst_angle = worst_angle.max(err);
            if err > 1e-3 {
                return Err(format!("trial {trial}: angle {a} recovered as {}", rec.angle));
            }
            if rec.signature != IntervalSignature::of_insert(ins.kind) {
                return Err(format!("trial {trial}: signature at {a} is {:?}", rec.signature));
            }
        }
        let group = lift(self_conjugacies(d))?;
        let c = group[rng.gen_range(1..group.len())];
        let rotated = cls(&lift(spec.conjugated(&c))?).map_err(|e| format!("{e} for {spec:?} under {c:?}"))?;
        let verdict = compare_classification(&data, &rotated, 1e-3);
        if !matches!(verdict, Verdict::Equivalent(_)) {
            return Err(format!("trial {trial}: copy of {spec:?} conjugated by {c:?} gave {verdict:?}"));
        }
        let mut changed = spec.clone();
        changed.insertions[0].kind = altered(changed.insertions[0].kind);
        let other = cls(&changed)?;
        let verdict = compare_classification(&data, &other, 1e-3);
        if !matches!(verdict, Verdict::Distinct(_)) {
            return Err(format!("trial {trial}: altered copy of {:?} gave {verdict:?}", spec.insertions));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, format!("10 specs, worst angle error {worst_angle:.1e}, {secs:.1} s"))
}

fn periodic_count() -> Outcome {
    for d in [2i64, 3] {
        let map = lift(LiftedCircleMap::model(d, 1024))?;
        for n in 1..=6u32 {
            let pts = lift(find_periodic_points(&map, n as usize, 1e-12))?;
            let want = (d.pow(n) - 1) as usize;
            if pts.len() != want {
                return Err(format!("d={d} n={n}: {} points, expected {want}", pts.len()));
            }
            for p in &pts {
                let mut y = p.angle;
                for _ in 0..n {
                    y = map.eval(y);
                }
                if circle_dist(y, p.angle) > 1e-9 {
                    return Err(format!("d={d} n={n}: {} is off by {}", p.angle, circle_dist(y, p.angle)));
                }
            }
        }
    }
    Ok("d^n - 1 points for d = 2, 3 and n <= 6".into())
}

fn band_semiconjugacy() -> Outcome {
    let map = lift(AnnulusMapLift::skew(
        BaseSpec::identity(),
        FiberSpec::twisted(2, TwistSpec::Linear { slope: 0.1, intercept: 0.0 }),
    ))?;
    let h = lift(solve_band_semiconjugacy(&map, [0.2, 0.8], 1e-10, 200, BandGrid { nx: 32, ny: 256 }))?;
    let mut worst: f64 = 0.0;
    for i in 0..=60 {
        let x = 0.2 + 0.01 * i as f64;
        for j in 0..100 {
            let y = j as f64 / 100.0;
            worst = worst.max((h.eval(x, y) - y - 0.1 * x).abs());
        }
    }
    let surjective = (0..16).all(|k| check_fiber_surjectivity(&h, 0.2 + 0.6 * k as f64 / 15.0, 0.01));
    let connectors = (0..16).all(|k| check_fiber_connector(&h, k as f64 / 16.0, 1e-9).holds());
    ensure(
        worst <= 1e-6 && surjective && connectors,
        format!("ansatz error {worst:.1e}, surjective {surjective}, connectors {connectors}"),
    )
}

fn contracting(d: i64) -> Result<AnnulusMapLift> {
    AnnulusMapLift::skew(BaseSpec::contracting(0.9), FiberSpec::power(d))
}

fn repeller_recovery() -> Outcome {
    let mut notes = Vec::new();
    for (d, level) in [(2i64, 0.25), (3, 1.0 / 6.0)] {
        let map = lift(contracting(d))?;
        let c = lift(ConnectorCurve::constant(level, DEFAULT_MARGIN, 128))?;
        let set = lift(repelling_connectors(&map, &c, 10))?;
        if set.repellers.len() as i64 != (d - 1).abs() {
            return Err(format!("d={d}: {} repellers", set.repellers.len()));
        }
        let tol = 2.0 * set.expansion.powi(-10);
        let mut worst: f64 = 0.0;
        for r in &set.repellers {
            let off = r
                .curve
                .heights()
                .iter()
                .map(|&y| {
                    (0..d - 1)
                        .map(|k| circle_dist(y, k as f64 / (d - 1) as f64))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            worst = worst.max(off);
        }
        if worst > tol {
            return Err(format!("d={d}: repeller {worst:.2e} from the root lines, allowed {tol:.2e}"));
        }
        notes.push(format!("d={d} off {worst:.1e} <= {tol:.1e}"));
    }
    Ok(notes.join(", "))
}

fn repeller_vs_operator() -> Outcome {
    let (depth, tol) = (10usize, 1e-10);
    let grid = BandGrid { nx: 16, ny: 64 };
    let mut notes = Vec::new();
    for (d, level) in [(2i64, 0.25), (3, 1.0 / 6.0)] {
        let map = lift(contracting(d))?;
        let c = lift(ConnectorCurve::constant(level, DEFAULT_MARGIN, 128))?;
        let set = lift(repelling_connectors(&map, &c, 40))?;
        let coded = lift(semiconjugacy_from_repellers(&map, &set, depth, [0.2, 0.8], grid))?.field;
        let op = lift(solve_band_semiconjugacy(&map, [0.2, 0.8], tol, 400, grid))?;
        let allowed = (d as f64).powi(1 - depth as i32) + 10.0 * tol;
        let best = lift(self_conjugacies(d))?
            .into_iter()
            .map(|g| {
                let mut worst: f64 = 0.0;
                for i in 0..=grid.nx {
                    for j in 0..grid.ny {
                        worst = worst.max(circle_dist(g.apply(coded.sample(i, j)), op.sample(i, j)));
                    }
                }
                (worst, g)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("group is non-empty");
        if best.0 > allowed {
            return Err(format!("d={d}: best distance {:.2e} exceeds {allowed:.2e}", best.0));
        }
        notes.push(format!("d={d} {:.1e} <= {allowed:.1e}", best.0));
    }
    Ok(notes.join(", "))
}

fn obstruction_bound() -> Outcome {
    let map = lift(AnnulusMapLift::skew(
        BaseSpec::Affine { slope: 0.5, offset: 0.5 },
        FiberSpec::twisted(2, TwistSpec::Pole { coef: 1.0 }),
    ))?;
    let band = [0.1, 0.9];
    let c = lift(invariant_connector_from_arc(&map, (0.5, 0.0), 2, 40, 64, 1e-9))?.curve;
    let m = lift(semiconjugacy_from_invariant_connector(&map, &c, 8, 12, band, BandGrid { nx: 16, ny: 32 }))?
        .field
        .deviation_bound;
    let rep = lift(star_condition_scan(&map, band, &LoopSpec::FiberCircle { x: 0.99, y: 0.0 }, 6, m))?;
    let worst = rep.records.iter().map(|r| r.winding).max().unwrap_or(0);
    let scanned: Vec<u32> = rep.max_by_n.iter().map(|p| p.0).collect();
    ensure(
        rep.holds && !rep.records.is_empty(),
        format!("M = {m:.3}, max winding {worst} <= {:.3} over {} lifts, n in {scanned:?}", rep.implied_bound, rep.records.len()),
    )
}

fn counterexample_growth() -> Outcome {
    let t = counterexample_growth_table(8);
    let bounds: Vec<u64> = t.iter().map(|m| m.lower_bound).collect();
    let exact = t.iter().all(|m| m.lower_bound == (m.n - 1) as u64) && t.first().map(|m| m.n) == Some(2) && t.len() == 7;
    ensure(exact && t.iter().all(|m| m.check()), format!("bounds {bounds:?}"))
}

fn stability_construction() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let want = (std::f64::consts::TAU / 0.01).log2().ceil() as u32;
    for eps in [EpsilonSpec::Constant { value: 0.1 }, EpsilonSpec::Boundary { scale: 0.2 }] {
        let (_, rho) = lift(perturb_p2(&eps, 64))?;
        let r = lift(verify_perturbation(&eps, &rho, 100_000, 0.01))?;
        let ok = r.sup_ratio < 1.0
            && r.ratio_samples >= 100_000
            && r.invariant_fraction == 1.0
            && r.invariance_samples >= 10_000
            && r.injectivity.holds
            && r.noninjective_after == want;
        if !ok {
            return Err(format!("{eps:?}: {r:?}"));
        }
        notes.push(format!("ratio {:.3}", r.sup_ratio));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("{}, n = {want}, {secs:.2} s", notes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("operator contraction", operator_contraction),
        ("model fixed point", model_fixed_point),
        ("shift law", shift_law),
        ("affine oracle", affine_oracle),
        ("self-conjugacy group", self_conjugacy_group),
        ("classification round trip", classification_round_trip),
        ("periodic count", periodic_count),
        ("band semiconjugacy", band_semiconjugacy),
        ("repeller recovery", repeller_recovery),
        ("repeller coding vs operator", repeller_vs_operator),
        ("obstruction bound", obstruction_bound),
        ("counterexample growth", counterexample_growth),
        ("stability construction", stability_construction),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
