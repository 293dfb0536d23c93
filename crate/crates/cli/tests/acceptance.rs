//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the test
//! fails if any line fails.

use annulus_fixpoint::conley::ConleyDecomposition;
use annulus_fixpoint::diskchain::{
    construct_disk_chain, default_winding_window, find_periodic_boundary_chain, DiskChainOutcome,
};
use annulus_fixpoint::linkage::{collar_extend, rotation_number, Boundary};
use annulus_fixpoint::pipeline::PipelineConfig;
use annulus_fixpoint::reversible::{
    check_reversibility, check_symmetric_curve_intersection, standard_symmetric_curves,
};
use annulus_fixpoint::{
    boundary_linkage, build_transition_graph, intersects_image, AnnulusMap, BoxCover, GraphOptions,
    Involution, LiftPoint, MapSpec, TransitionGraph,
};
use annulus_fixpoint_cli::{cmd_analyze, RunConfig, EXIT_CERTIFIED, EXIT_HYPOTHESIS_VOID};
use serde_json::Value;
use std::path::Path;
use std::time::{Duration, Instant};

const CRITERION1_LIMIT: Duration = Duration::from_secs(60);
const CRITERION2_LIMIT: Duration = Duration::from_secs(30);
const CRITERION7_LIMIT: Duration = Duration::from_secs(1);
const LEAF_WIDTH: f64 = 1.0 / 4096.0;
const WITNESS_MIN_DISTANCE: f64 = 0.01;
const LYAPUNOV_GAP: f64 = 1e-12;
const REVERSIBILITY_TOL: f64 = 1e-12;
const MIN_COLLAR_DISPLACEMENT: f64 = 0.4;

type Outcome = (bool, String);

fn analyze(spec: MapSpec, out: &Path) -> (i32, Value, Duration) {
    let config = RunConfig {
        map: spec,
        pipeline: PipelineConfig::default(),
        out: out.to_path_buf(),
        workers: Some(1),
    };
    let start = Instant::now();
    let code = cmd_analyze(&config).expect("analyze runs");
    let elapsed = start.elapsed();
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    (code, serde_json::from_str(&text).unwrap(), elapsed)
}

fn criterion1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (code, report, elapsed) = analyze(
        MapSpec::named("perturbed_twist").with_param("eps", 0.05),
        dir.path(),
    );
    let certs = report["certificates"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let mut found = [false; 2];
    let mut sum = 0;
    let mut nonzero = true;
    for c in &certs {
        let b = &c["box"];
        let (x0, x1, y0, y1) = (
            b["x0"].as_f64().unwrap(),
            b["x1"].as_f64().unwrap(),
            b["y0"].as_f64().unwrap(),
            b["y1"].as_f64().unwrap(),
        );
        let index = c["index"].as_i64().unwrap();
        nonzero &= index != 0;
        sum += index;
        for (k, x) in [0.0, 0.5].into_iter().enumerate() {
            // boxes live in lift coordinates; any integer translate counts
            let shift = ((x0 + x1) / 2.0 - x).round();
            let inside = x0 - shift < x && x < x1 - shift && y0 < 0.5 && 0.5 < y1;
            if inside && x1 - x0 <= LEAF_WIDTH + 1e-15 {
                found[k] = true;
            }
        }
    }
    let pass = code == EXIT_CERTIFIED
        && certs.len() == 2
        && found == [true, true]
        && nonzero
        && sum == 0
        && elapsed < CRITERION1_LIMIT;
    (
        pass,
        format!(
            "perturbed_twist(0.05): exit {code}, {} certificates, around (0,.5)/(.5,.5): {found:?}, index sum {sum}, {:.2}s",
            certs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion2() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (code, report, elapsed) = analyze(
        MapSpec::named("drift_twist").with_param("eps", 0.1),
        dir.path(),
    );
    let linked = report["linkage"]["linked"].as_bool();
    let dist = report["linkage"]["witness"]["min_distance"]
        .as_f64()
        .unwrap_or(f64::NAN);
    let certs = report["certificates"].as_array().map_or(0, |a| a.len());
    let pass = linked == Some(false)
        && dist >= WITNESS_MIN_DISTANCE
        && certs == 0
        && code == EXIT_HYPOTHESIS_VOID
        && elapsed < CRITERION2_LIMIT
        && dir.path().join("witness_curve.csv").exists();
    (
        pass,
        format!(
            "drift_twist(0.1): linked {linked:?}, witness min-distance {dist:.4}, {certs} certificates, exit {code}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn catalog() -> Vec<AnnulusMap> {
    vec![
        AnnulusMap::pure_twist(),
        AnnulusMap::perturbed_twist(0.05).unwrap(),
        AnnulusMap::drift_twist(0.1).unwrap(),
    ]
}

fn graph(map: &AnnulusMap, nx: usize, ny: usize) -> TransitionGraph {
    let cover = BoxCover::new(nx, ny, (0.0, 1.0)).unwrap();
    build_transition_graph(map, &cover, &GraphOptions::default()).unwrap()
}

/// Nodes reachable from `u` by one or more edges.
fn reach(g: &TransitionGraph, u: usize) -> Vec<bool> {
    let mut seen = vec![false; g.node_count()];
    let mut stack: Vec<usize> = g.successors(u).map(|(v, _)| v).collect();
    while let Some(v) = stack.pop() {
        if !seen[v] {
            seen[v] = true;
            stack.extend(g.successors(v).map(|(w, _)| w));
        }
    }
    seen
}

fn criterion3() -> Outcome {
    let mut covers = 0;
    let mut mismatches = 0;
    for map in catalog() {
        for nx in 4..=16 {
            for ny in 2..=8 {
                let g = graph(&map, nx, ny);
                let d = ConleyDecomposition::compute(&g).unwrap();
                let r: Vec<Vec<bool>> = (0..g.node_count()).map(|u| reach(&g, u)).collect();
                let mask = d.recurrent_mask();
                for u in 0..g.node_count() {
                    if mask[u] != r[u][u] {
                        mismatches += 1;
                    }
                    for v in 0..g.node_count() {
                        let same = r[u][u] && r[v][v] && r[u][v] && r[v][u];
                        let ours = d.class_of[u].is_some() && d.class_of[u] == d.class_of[v];
                        if same != ours && (u == v || r[u][u]) {
                            mismatches += 1;
                        }
                    }
                }
                covers += 1;
            }
        }
    }
    (
        mismatches == 0,
        format!("{covers} covers up to 16x8, {mismatches} recurrent-set or class mismatches"),
    )
}

fn in_cantor_set_depth20(v: f64) -> bool {
    if !(0.0..=1.0).contains(&v) {
        return false;
    }
    if v == 1.0 {
        return true;
    }
    let mut x = v;
    for _ in 0..20 {
        x *= 3.0;
        let d = (x + 1e-6).floor().min(2.0);
        x = (x - d).max(0.0);
        if d == 1.0 {
            return x < 1e-6;
        }
    }
    true
}

fn criterion4() -> Outcome {
    let mut violations = 0;
    let mut runs = 0;
    for map in catalog() {
        for (nx, ny) in [(16, 4), (32, 8), (64, 16)] {
            let g = graph(&map, nx, ny);
            let d = ConleyDecomposition::compute(&g).unwrap();
            let v = &d.lyapunov.values;
            for e in g.edges() {
                let same = d.class_of[e.from].is_some() && d.class_of[e.from] == d.class_of[e.to];
                let ok = if same {
                    v[e.from] == v[e.to]
                } else {
                    v[e.to] < v[e.from] - LYAPUNOV_GAP
                };
                violations += !ok as usize;
            }
            violations += d
                .lyapunov
                .class_values
                .iter()
                .filter(|&&c| !in_cantor_set_depth20(c))
                .count();
            runs += 1;
        }
    }
    (
        violations == 0,
        format!("{runs} decompositions, {violations} violations"),
    )
}

fn polar(r: f64, deg: f64) -> LiftPoint {
    let t = deg.to_radians();
    LiftPoint::new(r * t.cos(), r * t.sin())
}

fn rotate120(p: LiftPoint) -> LiftPoint {
    let (s, c) = 120f64.to_radians().sin_cos();
    LiftPoint::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

fn criterion5() -> Outcome {
    let line: Vec<LiftPoint> = (0..6)
        .map(|k| LiftPoint::new(k as f64, 0.05 * (k % 2) as f64))
        .collect();
    let translation =
        match construct_disk_chain(&line, 0.2, 1.0, false, |p| LiftPoint::new(p.x + 1.0, p.y))
            .unwrap()
        {
            DiskChainOutcome::Built(c) => c.audit.valid(),
            DiskChainOutcome::GateFailed { .. } => false,
        };

    let fixture = vec![
        polar(0.55, 0.0),
        polar(0.55, 120.0),
        polar(0.62, 240.0),
        polar(0.78, 0.0),
        polar(0.78, 120.0),
        polar(0.70, 240.0),
    ];
    let (merged, margin) = match construct_disk_chain(&fixture, 0.1, 0.5, false, rotate120).unwrap()
    {
        DiskChainOutcome::Built(c) => {
            let margin = c
                .merges
                .iter()
                .map(|m| m.certified_gap)
                .fold(f64::INFINITY, f64::min);
            (
                c.audit.valid() && c.audit.pairwise_disjoint_margin >= 0.0 && !c.merges.is_empty(),
                margin,
            )
        }
        DiskChainOutcome::GateFailed { .. } => (false, f64::NAN),
    };

    let rejected = [(0.125, 0.5), (0.2, 0.5), (0.25, 1.0), (0.5, 1.0)]
        .iter()
        .all(|&(e, d)| {
            matches!(
                construct_disk_chain(&fixture, e, d, false, rotate120).unwrap(),
                DiskChainOutcome::GateFailed { .. }
            )
        });
    let pass = translation && merged && margin >= 0.5 - 4.0 * 0.1 - 1e-12 && rejected;
    (
        pass,
        format!("translation valid {translation}, merge valid {merged} with margin {margin:.3}, gate rejects ε ≥ δ/4: {rejected}"),
    )
}

fn criterion6() -> Outcome {
    let map = AnnulusMap::pure_twist();
    let g = graph(&map, 64, 16);
    let cover = g.cover();
    let d = ConleyDecomposition::compute(&g).unwrap();
    let verdict = boundary_linkage(&d, cover, &map).unwrap();
    match find_periodic_boundary_chain(&g, &verdict, &d.class_of, default_winding_window(&map)) {
        Ok(chain) => {
            let both = chain.nodes.iter().any(|&u| cover.row_of(u) == 0)
                && chain.nodes.iter().any(|&u| cover.row_of(u) == 15);
            let sum = chain.winding_sum();
            let closure = chain.closure_error(cover);
            (
                both && sum == 0 && closure == 0,
                format!(
                    "pure_twist 64x16: cycle of {} boxes, both boundary rows {both}, winding sum {sum}, closure error {closure}",
                    chain.len()
                ),
            )
        }
        Err(e) => (false, format!("pure_twist 64x16: no cycle ({e})")),
    }
}

fn criterion7() -> Outcome {
    let n = 1_000_000;
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for alpha in [0.5, -0.5, 1.0 / 3.0, 0.618034] {
        let rot = AnnulusMap::from_fns(
            "rotation",
            move |p: LiftPoint| LiftPoint::new(p.x + alpha, p.y),
            Some(move |p: LiftPoint| LiftPoint::new(p.x - alpha, p.y)),
        );
        let start = Instant::now();
        let r = rotation_number(&rot, Boundary::Bottom, n).unwrap();
        slowest = slowest.max(start.elapsed());
        worst = worst.max((r.value - alpha).abs());
    }
    let bound = 1.0 / n as f64;
    (
        worst <= bound && slowest < CRITERION7_LIMIT,
        format!(
            "worst error {worst:.3e} (bound {bound:.0e}), slowest {:.3}s",
            slowest.as_secs_f64()
        ),
    )
}

fn criterion8() -> Outcome {
    let base = AnnulusMap::perturbed_twist(0.05).unwrap();
    let ext = collar_extend(&base, 0.1, 100_000).unwrap();
    let valid = ext.validate().is_ok() && ext.y_range() == (-0.1, 1.1);
    let mut agrees = true;
    for i in 0..64 {
        for j in 1..64 {
            let p = LiftPoint::new(i as f64 / 64.0, j as f64 / 64.0);
            agrees &= ext.lift(p) == base.lift(p);
        }
    }
    let rigid = ext.has_rigid_boundaries(256);
    let mut min = f64::INFINITY;
    for i in 0..200 {
        for j in 0..=20 {
            let t = 0.1 * j as f64 / 20.0;
            for y in [-0.1 + t, 1.0 + t] {
                let p = LiftPoint::new(i as f64 / 200.0, y);
                min = min.min((ext.lift(p) - p).norm());
            }
        }
    }
    (
        valid && agrees && rigid && min > MIN_COLLAR_DISPLACEMENT,
        format!("invariants {valid}, agrees on (0,1) {agrees}, rigid boundaries {rigid}, min collar displacement {min:.4}"),
    )
}

fn criterion9() -> Outcome {
    let map = AnnulusMap::pure_twist();
    let r = Involution::reflection();
    let check = check_reversibility(&map, &r, 64, REVERSIBILITY_TOL);
    let curves = standard_symmetric_curves(256).unwrap();
    let verdicts =
        check_symmetric_curve_intersection(&map, &r, &curves, 1e-9, check.passed).unwrap();
    let hits = verdicts.iter().filter(|v| v.intersects()).count();
    // the drift map as a control: its mid circle misses its image
    let control = !intersects_image(
        &AnnulusMap::drift_twist(0.1).unwrap(),
        &curves[1],
        curves[1].max_step(),
    )
    .unwrap()
    .intersects();
    (
        check.passed && check.max_residual < REVERSIBILITY_TOL && hits == 8 && control,
        format!(
            "pure_twist residual {:.1e} on 64x64, {hits}/{} symmetric curves meet their images",
            check.max_residual,
            curves.len()
        ),
    )
}

fn criterion10() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = MapSpec::named("perturbed_twist").with_param("eps", 0.05);
    let mut same = true;
    for (dir, workers) in [(&a, Some(1)), (&b, None)] {
        let config = RunConfig {
            map: spec.clone(),
            pipeline: PipelineConfig::default(),
            out: dir.path().to_path_buf(),
            workers,
        };
        cmd_analyze(&config).unwrap();
    }
    let mut files = 0;
    for name in ["report.json", "decomposition.json", "chain.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        same &= x == y;
        files += 1;
    }
    (
        same,
        format!("{files} JSON reports byte-identical across two runs: {same}"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
        (9, criterion9),
        (10, criterion10),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let (pass, detail) = f();
        println!(
            "{} criterion {n}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
