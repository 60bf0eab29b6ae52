//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use clap::Parser;
use num_complex::Complex64;
use rand::Rng;
use serde_json::{json, Value};

use platycosm_cli::{execute, report_json, Cli, Ctx, Outcome, Tolerances};
use platycosm_core::char_variety::{
    fixed_distance, fixed_locus, lift_representation, relation_residual, restrict_to_lattice, FixedLocus,
};
use platycosm_core::fixtures;
use platycosm_core::g2_structures::{fixed_flat_sections, metric_from_3form, standard_phi, HKTriple};
use platycosm_core::higgs_harmonic::{
    dterm_residual, energy, fterm_residual, harmonic_metric_solve, metric_inner, random_tangent, retract,
    riemannian_gradient, solve_many, theta_from_metric, Grid, Initial, MetricSection, SolveOptions,
};
use platycosm_core::kronheimer_ale::{calibrate, freeness_check, smoothing_models, solve_level_set, SmoothingParameter, SphereType};
use platycosm_core::lie_core::LieContext;
use platycosm_core::linalg::{self, c64};
use platycosm_core::platycosm::presentation;
use platycosm_core::rng::{random_invertible, SeedStream};
use platycosm_core::spectral_cover as sc;

const SEED: u64 = 20_240_611;

struct Check {
    pass: bool,
    detail: String,
    report: Value,
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    run: fn(u64) -> Check,
}

fn cli(seed: u64, args: &[&str]) -> (Outcome, Value) {
    let mut argv = vec!["platycosm".to_string(), "--seed".into(), seed.to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let parsed = Cli::try_parse_from(&argv).expect("arguments parse");
    let ctx = Ctx::new(seed, Tolerances::default());
    let outcome = execute(&parsed.command, &ctx).expect("command runs");
    let report = report_json(&parsed.command.label(), &ctx, &outcome);
    (outcome, report)
}

fn g6_locus() -> FixedLocus {
    fixed_locus(&presentation("G6").unwrap(), &LieContext::new(2).unwrap()).unwrap()
}

fn generic_z<R: Rng>(rng: &mut R) -> Complex64 {
    loop {
        let z = Complex64::from_polar(rng.random_range(-2.0f64..2.0).exp(), rng.random_range(0.0..2.0 * PI));
        if (z - 1.0).norm() > 1e-3 && (z + 1.0).norm() > 1e-3 {
            return z;
        }
    }
}

fn three_lines(seed: u64) -> Check {
    let (outcome, report) = cli(seed, &["char", "fixed-locus", "--manifold", "g6", "--n", "2", "--samples", "10000"]);
    let r = &outcome.result;
    let count = r["component_count"].as_u64().unwrap_or(0);
    let dims: Vec<u64> = r["components"].as_array().map(|a| a.iter().filter_map(|c| c["dim"].as_u64()).collect()).unwrap_or_default();
    let lifted = r["samples"]["lifted"].as_u64().unwrap_or(0);
    let dist = r["samples"]["max_line_distance"].as_f64().unwrap_or(f64::INFINITY);
    // every line is pointwise fixed by the holonomy
    let p = presentation("G6").unwrap();
    let mut rng = SeedStream::new(seed).fork("three-lines-oracle");
    let fixed = g6_locus().components.iter().all(|l| (0..20).all(|_| fixed_distance(&p, &l.parametrize(generic_z(&mut rng))) <= 1e-12));
    Check {
        pass: outcome.pass && count == 3 && dims == vec![1, 1, 1] && lifted == 10_000 && dist <= 1e-9 && fixed,
        detail: format!("{count} components of dims {dims:?}; {lifted} samples within {dist:.1e} of the lines"),
        report,
    }
}

fn lifting(seed: u64) -> Check {
    let p = presentation("G6").unwrap();
    let locus = g6_locus();
    let mut rng = SeedStream::new(seed).fork("lifting");
    let (mut worst_rel, mut worst_trip, mut worst_fix, mut ok) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for line in &locus.components {
        for _ in 0..100 {
            let c = line.parametrize(generic_z(&mut rng));
            let Ok(rep) = lift_representation(&p, &c) else { continue };
            let g = linalg::normalize_det(&random_invertible(&mut rng, 2));
            let Ok(back) = restrict_to_lattice(&rep.conjugate(&g)) else { continue };
            worst_rel = worst_rel.max(relation_residual(&rep));
            worst_trip = worst_trip.max(back.distance(&c));
            worst_fix = worst_fix.max(fixed_distance(&p, &back));
            ok += 1;
        }
    }
    let pass = ok == 300 && worst_rel <= 1e-9 && worst_trip <= 1e-9 && worst_fix <= 1e-9;
    Check {
        pass,
        detail: format!("{ok}/300 lifted; relation {worst_rel:.1e}, round trip {worst_trip:.1e}, fixed {worst_fix:.1e}"),
        report: json!({ "lifted": ok, "relation": worst_rel, "roundtrip": worst_trip, "fixed": worst_fix }),
    }
}

fn rigid(seed: u64) -> Check {
    let (outcome, report) = cli(seed, &["char", "rigid"]);
    let r = &outcome.result;
    let nontrivial = r["nontrivial_rigid"].as_u64().unwrap_or(0);
    let trivial = r["trivial_rigid"].as_u64().unwrap_or(0);
    let dims_zero = r["report"]["rigid"].as_array().is_some_and(|a| a.iter().all(|c| c["deformation_dim"] == 0));
    let residuals_ok = r["report"]["rigid"]
        .as_array()
        .is_some_and(|a| a.iter().all(|c| c["relation_residual"].as_f64().is_some_and(|x| x <= 1e-9)));
    Check {
        pass: outcome.pass && nontrivial == 3 && trivial == 1 && dims_zero && residuals_ok,
        detail: format!("{nontrivial} nontrivial + {trivial} trivial isolated classes, all with zero-dimensional deformations: {dims_zero}"),
        report,
    }
}

fn conjecture(seed: u64) -> Check {
    let (two, r2) = cli(seed, &["char", "conjecture", "--n", "2"]);
    let locus = g6_locus();
    let mut dims_c: Vec<u64> = two.result["report"]["dims"].as_array().map(|a| a.iter().filter_map(|d| d.as_u64()).collect()).unwrap_or_default();
    let mut dims_f: Vec<u64> = locus.components.iter().map(|c| c.dim as u64).collect();
    dims_c.sort();
    dims_f.sort();
    let (three, r3) = cli(seed, &["char", "conjecture", "--n", "3"]);
    let emitted = three.result["report"]["components"].is_array();
    Check {
        pass: two.pass && dims_c == dims_f && emitted,
        detail: format!(
            "n=2 components {dims_c:?} match the fixed locus {dims_f:?}; n=3 report with {} components",
            three.result["report"]["components"].as_array().map_or(0, |a| a.len())
        ),
        report: json!({ "n2": r2, "n3": r3 }),
    }
}

fn harmonic_solver(seed: u64) -> Check {
    let a = 2f64.ln();
    let rep = fixtures::g1_diagonal([Complex64::from_polar(2.0, 0.9), Complex64::from_polar(1.0, -0.4), Complex64::from_polar(1.0, 2.2)]);
    let g = Grid::new(&rep.presentation, 16).unwrap();
    let out = harmonic_metric_solve(&rep, &g, &SolveOptions::default(), Initial::Identity).unwrap();
    // the oracle family diag(c·e^{2ax}, e^{−2ax}/c); c is the centralizer gauge, read at the origin
    let c = out.k.k[0][(0, 0)].re;
    let mut metric_err: f64 = 0.0;
    for v in 0..g.len() {
        let x = g.point(v)[0];
        let oracle = linalg::from_real_diag(&[c * (2.0 * a * x).exp(), (-2.0 * a * x).exp() / c]);
        metric_err = metric_err.max(linalg::max_abs(&(&out.k.k[v] - oracle)));
    }
    let analytic = 8.0 * a * a;
    let energy_rel = (out.energy - analytic).abs() / analytic;
    let theta = theta_from_metric(&out.k, &rep).unwrap();
    let expected = linalg::from_real_diag(&[a, -a]);
    let mut theta_err: f64 = 0.0;
    for v in 0..g.len() {
        theta_err = theta_err.max(linalg::max_abs(&(theta.theta(v, 0) - &expected)));
        theta_err = theta_err.max(linalg::max_abs(theta.theta(v, 1))).max(linalg::max_abs(theta.theta(v, 2)));
    }
    // gradient against central differences along random tangent directions
    let mut rng = SeedStream::new(seed).fork("fd-directions");
    let g8 = Grid::new(&rep.presentation, 8).unwrap();
    let base = MetricSection {
        grid: g8.clone(),
        k: random_tangent(&MetricSection::identity(&g8, 2), &mut rng).iter().map(|x| linalg::exp_herm(&(x * c64(0.3, 0.0)))).collect(),
    };
    let grad = riemannian_gradient(&base, &rep).unwrap();
    let mut fd_err: f64 = 0.0;
    for _ in 0..50 {
        let dir = random_tangent(&base, &mut rng);
        let t = 1e-5;
        let fd = (energy(&retract(&base, &dir, t), &rep).unwrap() - energy(&retract(&base, &dir, -t), &rep).unwrap()) / (2.0 * t);
        let an = metric_inner(&base, &grad, &dir);
        fd_err = fd_err.max((fd - an).abs() / an.abs().max(1e-3));
    }
    let pass = metric_err <= 1e-6 && energy_rel <= 5e-3 && theta_err <= 1e-6 && fd_err <= 1e-5;
    Check {
        pass,
        detail: format!(
            "metric {metric_err:.1e}, energy {:.6} vs {analytic:.6} ({:.2e} rel), theta {theta_err:.1e}, gradient {fd_err:.1e} rel over 50 directions",
            out.energy, energy_rel
        ),
        report: json!({ "metric_error": metric_err, "energy": out.energy, "analytic_energy": analytic, "theta_error": theta_err, "fd_error": fd_err, "iterations": out.iterations }),
    }
}

fn pw_residuals(seed: u64) -> Check {
    let mut rng = SeedStream::new(seed).fork("pw-suite");
    let mut jobs = Vec::new();
    for _ in 0..4 {
        let lams = [0; 3].map(|_| Complex64::from_polar(rng.random_range(-1.0f64..1.0).exp(), rng.random_range(0.0..2.0 * PI)));
        let rep = fixtures::g1_diagonal(lams);
        jobs.push((rep.clone(), Grid::new(&rep.presentation, 8).unwrap()));
    }
    for name in ["trivial", "unitary"] {
        let rep = fixtures::representation(name).unwrap();
        jobs.push((rep.clone(), Grid::new(&rep.presentation, 8).unwrap()));
    }
    let p = presentation("G6").unwrap();
    for line in &g6_locus().components {
        for _ in 0..2 {
            let rep = lift_representation(&p, &line.parametrize(generic_z(&mut rng))).unwrap();
            jobs.push((rep, Grid::new(&p, 8).unwrap()));
        }
    }
    let outs = solve_many(&jobs, &SolveOptions::default());
    let (mut comm, mut closed, mut dterm, mut failures) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    let mut rows = Vec::new();
    for ((rep, _), out) in jobs.iter().zip(&outs) {
        let Ok(out) = out else {
            failures += 1;
            continue;
        };
        let theta = theta_from_metric(&out.k, rep).unwrap();
        let f = fterm_residual(&theta).unwrap();
        let d = dterm_residual(&theta, &out.k).unwrap();
        comm = comm.max(f.comm);
        closed = closed.max(f.closed);
        dterm = dterm.max(d);
        rows.push(json!({ "manifold": rep.presentation.name, "comm": f.comm, "closed": f.closed, "dterm": d }));
    }
    let (cli_out, cli_report) = cli(seed, &["higgs", "solve", "--fixture", "g6-line", "--grid", "8"]);
    let pass = failures == 0 && comm <= 1e-8 && closed <= 1e-8 && dterm <= 1e-7 && cli_out.pass;
    Check {
        pass,
        detail: format!("{} solves ({failures} failed): comm {comm:.1e}, closed {closed:.1e}, D-term {dterm:.1e}", jobs.len() + 1),
        report: json!({ "solves": rows, "cli": cli_report }),
    }
}

fn spectral(seed: u64) -> Check {
    let mut report = serde_json::Map::new();
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["constant", "gradient", "g6-axis", "zero"] {
        let (o, r) = cli(seed, &["spectral", "roundtrip", "--fixture", name, "--grid", "8"]);
        let d = o.result["sheet_distance"].as_f64().unwrap_or(f64::INFINITY);
        pass &= o.pass && d <= 1e-9;
        notes.push(format!("{name} {d:.0e}"));
        report.insert(format!("roundtrip-{name}"), r);
    }
    let (sine, r) = cli(seed, &["spectral", "roundtrip", "--fixture", "sine", "--grid", "8"]);
    let partial = sine.result["error_kind"] == "partially_ramified";
    pass &= partial;
    report.insert("roundtrip-sine".into(), r);
    let mut iff = 0;
    for name in fixtures::FIELD_FIXTURES {
        let theta = fixtures::field(name, 8).unwrap();
        let closed = fterm_residual(&theta).unwrap().closed;
        let cover = sc::spectral_cover(&theta, 1e-10).unwrap();
        let lag = sc::lagrangian_residual(&cover).unwrap().residual;
        let agree = (lag <= 1e-10) == (closed <= 1e-10);
        pass &= agree;
        iff += agree as usize;
        report.insert(format!("lagrangian-{name}"), json!({ "closed": closed, "lagrangian": lag }));
    }
    Check {
        pass,
        detail: format!(
            "round trips [{}]; sine raises PartiallyRamified: {partial}; lagrangian iff closed on {iff}/{} fixtures",
            notes.join(", "),
            fixtures::FIELD_FIXTURES.len()
        ),
        report: Value::Object(report),
    }
}

fn g2_flat(seed: u64) -> Check {
    let g = metric_from_3form(&standard_phi(&HKTriple::flat(), 1.0).unwrap()).g.unwrap();
    let metric_err = (0..7).flat_map(|i| (0..7).map(move |j| (i, j))).map(|(i, j)| (g[i][j] - (i == j) as u8 as f64).abs()).fold(0.0, f64::max);
    let (t3, rt3) = cli(seed, &["g2", "check", "--fixture", "t3"]);
    let (g6, rg6) = cli(seed, &["g2", "check", "--fixture", "g6"]);
    let max_adiabatic = |o: &Outcome| o.result["residuals"]["adiabatic"].as_array().map_or(f64::INFINITY, |a| a.iter().filter_map(|x| x.as_f64()).fold(0.0, f64::max));
    let fibre = |o: &Outcome| o.result["fibre_restriction"].as_f64().unwrap_or(f64::INFINITY);
    let pass = metric_err <= 1e-12
        && t3.pass
        && g6.pass
        && max_adiabatic(&t3) <= 1e-12
        && max_adiabatic(&g6) <= 1e-12
        && fibre(&t3) == 0.0
        && fibre(&g6) == 0.0
        && g6.result["equivariant"] == true;
    Check {
        pass,
        detail: format!(
            "metric {metric_err:.1e}; adiabatic T3 {:.1e}, G6 {:.1e}; fibre {} / {}; G6 equivariant {}",
            max_adiabatic(&t3),
            max_adiabatic(&g6),
            fibre(&t3),
            fibre(&g6),
            g6.result["equivariant"]
        ),
        report: json!({ "metric_error": metric_err, "t3": rt3, "g6": rg6 }),
    }
}

fn duality(seed: u64) -> Check {
    let (o, report) = cli(seed, &["g2", "duality", "--grid", "8"]);
    let r = &o.result;
    let matched = r["component_match"].as_u64().unwrap_or(0);
    let err = r["max_parameter_error"].as_f64().unwrap_or(f64::INFINITY);
    // independent counts: the closed-form fixed locus and the additive fixed-point system
    let lines = g6_locus().components.len();
    let rays = fixed_flat_sections(&presentation("G6").unwrap()).len();
    Check {
        pass: o.pass && matched == 3 && r["bijection"] == true && err <= 1e-6 && lines == 3 && rays == 3,
        detail: format!("{lines} lines <-> {rays} rays, {matched} matched, parameter error {err:.1e}"),
        report,
    }
}

fn kronheimer(seed: u64) -> Check {
    let (o, demo) = cli(seed, &["ale", "demo", "--xi", "0,0,0", "--samples", "1000"]);
    let singular = o.result["max_singular_defect"].as_f64().unwrap_or(f64::INFINITY);
    let samples = o.result["samples"].as_u64().unwrap_or(0);
    let streams = SeedStream::new(seed);
    let mut rng = streams.fork("calibration-chis");
    let chis: Vec<Complex64> = (0..10).map(|_| Complex64::from_polar(rng.random_range(0.2..3.0), rng.random_range(0.0..2.0 * PI))).collect();
    let cal = calibrate(&chis, 20, &mut streams.fork("calibration")).unwrap();
    let vals = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let mut free_ok = 0;
    let mut orbit_rng = streams.fork("freeness");
    for a in vals {
        for b in vals {
            for c in vals {
                let xi = SmoothingParameter::new([a, b, c]);
                let nonzero = a != 0.0 || b != 0.0 || c != 0.0;
                // a point with nontrivial stabilizer is fixed by the element of order two
                let stabilized = nonzero
                    && solve_level_set(&xi, 4, &mut orbit_rng).unwrap().iter().any(|p| {
                        let q = p.act(PI);
                        q.to_vec().iter().zip(p.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) < 1e-9
                    });
                free_ok += (freeness_check(&xi).free == nonzero && !stabilized) as usize;
            }
        }
    }
    let mut srng = streams.fork("smoothing-models");
    let plus = smoothing_models(1.0, 1, 50, &mut srng).unwrap();
    let minus = smoothing_models(1.0, -1, 50, &mut srng).unwrap();
    let spheres_ok = plus.sphere_type == SphereType::Real
        && minus.sphere_type == SphereType::Imaginary
        && [&plus, &minus].iter().all(|m| m.sphere_residual <= 1e-14 && m.involution_defect <= 1e-14 && m.stray_fixed_points == 0);
    let pass = o.pass && samples >= 1000 && singular <= 1e-9 && cal.spread <= 1e-8 && free_ok == 125 && spheres_ok;
    Check {
        pass,
        detail: format!(
            "uv - w^2 {singular:.1e} on {samples} points; c = {:.12} spread {:.1e} over 10 values; freeness {free_ok}/125; spheres {spheres_ok}",
            cal.c, cal.spread
        ),
        report: json!({ "demo": demo, "calibration": cal, "freeness_agree": free_ok, "plus": plus, "minus": minus }),
    }
}

fn criteria() -> Vec<Criterion> {
    let s = Duration::from_secs;
    vec![
        Criterion { id: 1, name: "three-lines character variety", limit: s(10), run: three_lines },
        Criterion { id: 2, name: "lifting fixed classes", limit: s(30), run: lifting },
        Criterion { id: 3, name: "rigid components", limit: s(10), run: rigid },
        Criterion { id: 4, name: "twisted-sector formula at n=2, report at n=3", limit: s(120), run: conjecture },
        Criterion { id: 5, name: "harmonic solver on the G1 oracle", limit: s(60), run: harmonic_solver },
        Criterion { id: 6, name: "Hitchin equation residuals", limit: s(60), run: pw_residuals },
        Criterion { id: 7, name: "spectral correspondence", limit: s(30), run: spectral },
        Criterion { id: 8, name: "G2 flat fixtures", limit: s(10), run: g2_flat },
        Criterion { id: 9, name: "moduli crosscheck", limit: s(120), run: duality },
        Criterion { id: 10, name: "Kronheimer A1 quotient", limit: s(60), run: kronheimer },
    ]
}

/// Run every criterion and collect the reports; timings are kept apart.
fn suite(seed: u64) -> (Vec<(usize, Check, Duration)>, String) {
    let mut results = Vec::new();
    let mut reports = serde_json::Map::new();
    for c in criteria() {
        let start = Instant::now();
        let check = (c.run)(seed);
        let elapsed = start.elapsed();
        reports.insert(format!("criterion-{:02}", c.id), check.report.clone());
        results.push((c.id, check, elapsed));
    }
    let text = serde_json::to_string_pretty(&Value::Object(reports)).expect("reports serialize");
    (results, text)
}

fn main() {
    let table = criteria();
    let dir = tempfile::tempdir().expect("temp dir");
    let (first, text1) = suite(SEED);
    let mut all = true;
    for (id, check, elapsed) in &first {
        let c = table.iter().find(|c| c.id == *id).unwrap();
        let in_time = *elapsed <= c.limit;
        let ok = check.pass && in_time;
        all &= ok;
        println!(
            "{} criterion {id}: {}: {} [{:.1} s, limit {} s]",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            check.detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    let (_, text2) = suite(SEED);
    let p1 = dir.path().join("run1.json");
    let p2 = dir.path().join("run2.json");
    std::fs::write(&p1, &text1).unwrap();
    std::fs::write(&p2, &text2).unwrap();
    let b1 = std::fs::read(&p1).unwrap();
    let b2 = std::fs::read(&p2).unwrap();
    let same = b1 == b2;
    all &= same;
    println!(
        "{} criterion 11: determinism: two runs with seed {SEED} give {} reports ({} bytes)",
        if same { "PASS" } else { "FAIL" },
        if same { "byte-identical" } else { "different" },
        b1.len()
    );
    if !all {
        std::process::exit(1);
    }
}
