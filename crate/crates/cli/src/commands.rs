use num_complex::Complex64;
use serde_json::{json, Value};

use platycosm_core::char_variety::{
    self, fixed_locus, lift_representation, match_conjecture, relation_residual, restrict_to_lattice, rigid_components,
    sample_fixed_classes, CharError, Representation, TorusClass,
};
use platycosm_core::fixtures::{self, FixtureError};
use platycosm_core::g2_structures::{
    classify_smoothing, donaldson_residuals, duality_crosscheck, duality_samples, equivariance_check, g6_triple_action,
    metric_from_3form, restrict_to_fiber, standard_phi, DonaldsonData, HKTriple, SmoothingInput, ADIABATIC_LABELS,
};
use platycosm_core::higgs_harmonic::{
    decompose_connection, dterm_residual, fterm_residual, harmonic_metric_solve, reassembled_monodromy, theta_from_metric,
    Grid, HiggsField, Initial, SolveOptions,
};
use platycosm_core::kronheimer_ale::{
    complex_invariants, freeness_check, moment_map, solve_level_set, SmoothingParameter,
};
use platycosm_core::lie_core::LieContext;
use platycosm_core::linalg::{self, cmat_serde};
use platycosm_core::platycosm::{presentation, verify_presentation, PlatycosmPresentation};
use platycosm_core::spectral_cover as sc;

use crate::{read_json_arg, CliError, Ctx, FieldSource, G2Fixture, InitKind, Outcome, RepSource, Table};

fn manifold(name: &str) -> Result<PlatycosmPresentation, CliError> {
    presentation(&name.to_uppercase()).map_err(|e| CliError::Usage(e.to_string()))
}

fn char_err(e: CharError) -> Result<Outcome, CliError> {
    match e {
        CharError::Unsupported(m) => Err(CliError::Usage(m)),
        other => Ok(Outcome::failed(other)),
    }
}

fn fixture_err(e: FixtureError) -> CliError {
    CliError::Usage(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn load_rep(src: &RepSource) -> Result<Representation, CliError> {
    match (&src.rep, &src.fixture) {
        (Some(r), _) => {
            let rep: Representation = serde_json::from_value(read_json_arg(r)?)?;
            Representation::new(rep.presentation, rep.images).map_err(|e| CliError::Usage(e.to_string()))
        }
        (None, Some(f)) => fixtures::representation(f).map_err(fixture_err),
        (None, None) => Err(CliError::Usage("one of --rep or --fixture is required".into())),
    }
}

pub fn load_field(src: &FieldSource, grid: usize) -> Result<HiggsField, CliError> {
    match (&src.field, &src.fixture) {
        (Some(f), _) => {
            let field: HiggsField = serde_json::from_value(read_json_arg(f)?)?;
            if field.comps.len() != 3 * field.grid.len() {
                return Err(CliError::Usage(format!(
                    "field has {} components for {} vertices",
                    field.comps.len(),
                    field.grid.len()
                )));
            }
            Ok(field)
        }
        (None, Some(name)) => fixtures::field(name, grid).map_err(fixture_err),
        (None, None) => Err(CliError::Usage("one of --field or --fixture is required".into())),
    }
}

/// A class given either as three SL(2) coordinates or as full rows.
fn parse_class(v: &Value) -> Result<TorusClass, CliError> {
    if let Ok(z) = serde_json::from_value::<[[f64; 2]; 3]>(v.clone()) {
        let z = z.map(|p| Complex64::new(p[0], p[1]));
        if z.iter().any(|x| x.norm() == 0.0 || !x.is_finite()) {
            return Err(CliError::Usage("class coordinates must be nonzero".into()));
        }
        return Ok(TorusClass::sl2(z));
    }
    let raw: TorusClass = serde_json::from_value(v.clone())?;
    TorusClass::new(raw.rows).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn verify(_ctx: &Ctx, name: &str) -> Result<Outcome, CliError> {
    let p = manifold(name)?;
    let report = verify_presentation(&p);
    let mut table = Table::new("cayley", &["row", "entries"]);
    for (i, row) in report.cayley_table.iter().enumerate() {
        table.push(vec![i.to_string(), row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")]);
    }
    let mut out = Outcome::new(report.all_pass(), serde_json::to_value(&report)?);
    out.tables.push(table);
    Ok(out)
}

pub fn char_fixed_locus(ctx: &Ctx, name: &str, n: usize, samples: usize) -> Result<Outcome, CliError> {
    let p = manifold(name)?;
    let lie = LieContext::new(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let locus = match fixed_locus(&p, &lie) {
        Ok(l) => l,
        Err(e) => return char_err(e),
    };
    let tol = ctx.tol.get("class");
    let sampled = (samples > 0).then(|| sample_fixed_classes(&p, &locus, samples, &mut ctx.rng("fixed-locus-samples")));
    let dims_ok = locus.components.iter().all(|c| c.dim == 1);
    let samples_ok = sampled.as_ref().is_none_or(|s| s.lifted == samples && s.max_line_distance <= tol);
    let mut table = Table::new("components", &["label", "axis", "sign1", "sign2", "sign3", "dim", "liftable"]);
    for c in locus.components.iter().chain(&locus.obstructed) {
        table.push(vec![
            c.label.clone(),
            c.axis.to_string(),
            c.signs[0].to_string(),
            c.signs[1].to_string(),
            c.signs[2].to_string(),
            c.dim.to_string(),
            c.liftable.to_string(),
        ]);
    }
    let result = json!({
        "manifold": p.name,
        "n": n,
        "component_count": locus.components.len(),
        "components": locus.components,
        "obstructed": locus.obstructed,
        "samples": sampled,
    });
    let mut out = Outcome::new(locus.components.len() == 3 && dims_ok && samples_ok, result);
    out.tables.push(table);
    Ok(out)
}

pub fn char_lift(ctx: &Ctx, name: &str, point: &Value) -> Result<Outcome, CliError> {
    let p = manifold(name)?;
    let class = parse_class(point)?;
    let fixed_distance = char_variety::fixed_distance(&p, &class);
    let rep = match lift_representation(&p, &class) {
        Ok(r) => r,
        Err(e) => return char_err(e),
    };
    let residual = relation_residual(&rep);
    let back = match restrict_to_lattice(&rep) {
        Ok(b) => b,
        Err(e) => return char_err(e),
    };
    let roundtrip = back.distance(&class);
    let pass = residual <= ctx.tol.get("relation") && roundtrip <= ctx.tol.get("class");
    let images: Vec<_> = rep.images.iter().map(cmat_serde::to_rows).collect();
    Ok(Outcome::new(
        pass,
        json!({
            "class": class,
            "fixed_distance": fixed_distance,
            "images": images,
            "relation_residual": residual,
            "roundtrip_distance": roundtrip,
        }),
    ))
}

pub fn char_rigid(_ctx: &Ctx, name: &str) -> Result<Outcome, CliError> {
    let p = manifold(name)?;
    let lie = LieContext::new(2).expect("n = 2");
    let report = match rigid_components(&p, &lie) {
        Ok(r) => r,
        Err(e) => return char_err(e),
    };
    let trivial = report.rigid.iter().filter(|c| c.trivial).count();
    let pass = report.nontrivial_count() == 3 && trivial == 1 && report.rigid.iter().all(|c| c.deformation_dim == 0);
    let mut table = Table::new("rigid", &["label", "trivial", "lattice_signs", "relation_residual", "deformation_dim"]);
    for c in &report.rigid {
        table.push(vec![
            c.label.clone(),
            c.trivial.to_string(),
            format!("{} {} {}", c.lattice_signs[0], c.lattice_signs[1], c.lattice_signs[2]),
            num(c.relation_residual),
            c.deformation_dim.to_string(),
        ]);
    }
    let mut out = Outcome::new(
        pass,
        json!({ "nontrivial_rigid": report.nontrivial_count(), "trivial_rigid": trivial, "report": report }),
    );
    out.tables.push(table);
    Ok(out)
}

pub fn char_conjecture(ctx: &Ctx, name: &str, n: usize, samples: usize) -> Result<Outcome, CliError> {
    let p = manifold(name)?;
    let report = match char_variety::conjecture_rhs(&p, n, samples, &mut ctx.rng(&format!("conjecture-{n}"))) {
        Ok(r) => r,
        Err(e) => return char_err(e),
    };
    let mut table = Table::new("conjecture", &["label", "dim", "samples", "verified"]);
    for c in &report.components {
        table.push(vec![c.label.clone(), c.dim.to_string(), c.sample_points.len().to_string(), c.samples_verified.to_string()]);
    }
    // the fixed locus is only available in closed form for SL(2)
    let (matches, pass) = if n == 2 {
        let locus = match fixed_locus(&p, &LieContext::new(2).expect("n = 2")) {
            Ok(l) => l,
            Err(e) => return char_err(e),
        };
        let (m, bij) = match_conjecture(&report, &locus);
        (Some(m), bij)
    } else {
        (None, true)
    };
    let mut out = Outcome::new(pass, json!({ "report": report, "matches_fixed_locus": matches }));
    out.tables.push(table);
    Ok(out)
}

pub fn higgs_solve(ctx: &Ctx, rep: &Representation, grid_n: usize, init: InitKind, max_iter: usize) -> Result<Outcome, CliError> {
    let grid = Grid::new(&rep.presentation, grid_n).map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = SolveOptions { tol: ctx.tol.get("solver"), max_iter, ..SolveOptions::default() };
    let init = match init {
        InitKind::Identity => Initial::Identity,
        InitKind::Random => Initial::Random { scale: 0.3, seed_rng: ctx.rng("higgs-init") },
    };
    let out = match harmonic_metric_solve(rep, &grid, &opts, init) {
        Ok(o) => o,
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let theta = match theta_from_metric(&out.k, rep) {
        Ok(t) => t,
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let (f, d, twist, equi) = match (
        fterm_residual(&theta),
        dterm_residual(&theta, &out.k),
        theta.twist_residual(),
        out.k.equivariance_residual(rep),
    ) {
        (Ok(f), Ok(d), Ok(t), Ok(e)) => (f, d, t, e),
        _ => return Ok(Outcome::failed("residual evaluation failed")),
    };
    let monodromy_error = match decompose_connection(rep, &out.k) {
        Ok(split) => reassembled_monodromy(&split)
            .iter()
            .zip(rep.lattice_images())
            .map(|(m, l)| linalg::max_abs(&(m - l)))
            .fold(0.0, f64::max),
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let pass = f.comm <= ctx.tol.get("comm") && f.closed <= ctx.tol.get("closed") && d <= ctx.tol.get("dterm");
    let mut table = Table::new("trace", &["iter", "energy", "grad_norm"]);
    for row in &out.trace {
        table.push(vec![row.iter.to_string(), num(row.energy), num(row.grad_norm)]);
    }
    let theta0: Vec<_> = (0..3).map(|i| cmat_serde::to_rows(theta.theta(0, i))).collect();
    let mut o = Outcome::new(
        pass,
        json!({
            "manifold": rep.presentation.name,
            "grid": grid_n,
            "energy": out.energy,
            "tension": out.tension,
            "iterations": out.iterations,
            "comm": f.comm,
            "closed": f.closed,
            "dterm": d,
            "twist_residual": twist,
            "equivariance_residual": equi,
            "min_eigenvalue": out.k.min_eigenvalue(),
            "det_defect": out.k.det_defect(),
            "monodromy_error": monodromy_error,
            "theta_at_origin": theta0,
        }),
    );
    o.tables.push(table);
    Ok(o)
}

pub fn higgs_residuals(ctx: &Ctx, theta: &HiggsField) -> Result<Outcome, CliError> {
    let (f, twist) = match (fterm_residual(theta), theta.twist_residual()) {
        (Ok(f), Ok(t)) => (f, t),
        (Err(e), _) | (_, Err(e)) => return Ok(Outcome::failed(e)),
    };
    let pass = f.comm <= ctx.tol.get("comm") && f.closed <= ctx.tol.get("closed");
    Ok(Outcome::new(
        pass,
        json!({ "grid": theta.grid.n, "comm": f.comm, "closed": f.closed, "twist_residual": twist, "max_trace": theta.max_trace() }),
    ))
}

fn sheet_table(cover: &sc::SpectralCoverData) -> Table {
    let mut t = Table::new("sheets", &["vertex", "x1", "x2", "x3", "sheet", "re1", "im1", "re2", "im2", "re3", "im3", "ramified"]);
    for (v, sheets) in cover.sheets.iter().enumerate() {
        let x = cover.grid.point(v);
        for (s, a) in sheets.iter().enumerate() {
            t.push(vec![
                v.to_string(),
                num(x[0]),
                num(x[1]),
                num(x[2]),
                s.to_string(),
                num(a[0].re),
                num(a[0].im),
                num(a[1].re),
                num(a[1].im),
                num(a[2].re),
                num(a[2].im),
                cover.ramified[v].to_string(),
            ]);
        }
    }
    t
}

pub fn spectral_cover(ctx: &Ctx, theta: &HiggsField) -> Result<Outcome, CliError> {
    let tol = ctx.tol.get("sheet");
    let cover = match sc::spectral_cover(theta, tol) {
        Ok(c) => c,
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let closed = fterm_residual(theta).map(|f| f.closed).ok();
    let lagrangian = cover.is_unramified().then(|| sc::lagrangian_residual(&cover).ok()).flatten();
    let lag_tol = ctx.tol.get("lagrangian");
    let iff = match (&lagrangian, closed) {
        (Some(l), Some(c)) => Some((l.residual <= lag_tol) == (c <= lag_tol)),
        _ => None,
    };
    let result = json!({
        "grid": cover.grid.n,
        "sheets": cover.n,
        "real": cover.real,
        "ramified_vertices": cover.ramified.iter().filter(|r| **r).count(),
        "unramified": cover.is_unramified(),
        "totally_ramified": cover.is_totally_ramified(),
        "lattice_monodromy": cover.lattice_monodromy,
        "monodromy": cover.monodromy,
        "components": cover.components(),
        "equivariance_defect": cover.equivariance_defect,
        "closed": closed,
        "lagrangian": lagrangian,
        "lagrangian_iff_closed": iff,
    });
    let mut out = Outcome::new(iff != Some(false), result);
    out.tables.push(sheet_table(&cover));
    Ok(out)
}

pub fn spectral_roundtrip(ctx: &Ctx, theta: &HiggsField) -> Result<Outcome, CliError> {
    let tol = ctx.tol.get("sheet");
    let run = || -> Result<Value, sc::SpectralError> {
        let cover = sc::spectral_cover(theta, tol)?;
        let sd = sc::spectral_data(theta, None, tol)?;
        let back = sc::reconstruct(&sd)?;
        let again = sc::spectral_cover(&back.theta, tol)?;
        Ok(json!({
            "sheet_distance": sc::sheet_distance(&again, &cover),
            "embedding_residual": sd.embedding_residual,
            "twist_residual": back.theta.twist_residual().ok(),
            "unramified": cover.is_unramified(),
            "totally_ramified": cover.is_totally_ramified(),
        }))
    };
    match run() {
        Ok(v) => {
            let d = v["sheet_distance"].as_f64().unwrap_or(f64::INFINITY);
            Ok(Outcome::new(d <= ctx.tol.get("roundtrip"), v))
        }
        Err(e) => {
            let kind = match &e {
                sc::SpectralError::PartiallyRamified { .. } => "partially_ramified",
                sc::SpectralError::NonCommuting { .. } => "non_commuting",
                _ => "other",
            };
            Ok(Outcome::new(false, json!({ "error": e.to_string(), "error_kind": kind })))
        }
    }
}

pub fn g2_check(ctx: &Ctx, fixture: G2Fixture, grid_n: usize) -> Result<Outcome, CliError> {
    let tol = ctx.tol.get("g2");
    let (data, p) = match fixture {
        G2Fixture::T3 => (DonaldsonData::flat_t3(grid_n), manifold("G1")?),
        G2Fixture::G6 => (DonaldsonData::g6(grid_n), manifold("G6")?),
    };
    let data = data.map_err(|e| CliError::Usage(e.to_string()))?;
    let flat_metric = match standard_phi(&HKTriple::flat(), 1.0) {
        Ok(phi) => metric_from_3form(&phi),
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let metric_error = flat_metric.g.as_ref().map_or(f64::INFINITY, |g| {
        (0..7).flat_map(|i| (0..7).map(move |j| (i, j))).map(|(i, j)| (g[i][j] - if i == j { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max)
    });
    let res = match donaldson_residuals(&data) {
        Ok(r) => r,
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let fibre = (0..data.grid.len())
        .map(|v| restrict_to_fiber(&data.phi_at(v)).coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let equivariant = match fixture {
        G2Fixture::T3 => equivariance_check(&p, &[(platycosm_core::platycosm::identity_mat(), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])]),
        G2Fixture::G6 => equivariance_check(&p, &g6_triple_action()),
    };
    let adiabatic: serde_json::Map<String, Value> =
        ADIABATIC_LABELS.iter().zip(res.adiabatic).map(|(l, v)| (l.to_string(), json!(v))).collect();
    let pass = metric_error <= tol
        && res.max_adiabatic() <= tol
        && res.d_f_eta <= tol
        && res.d_h_eta <= tol
        && res.mu_eq <= tol
        && fibre == 0.0
        && equivariant
        && res.all_positive;
    Ok(Outcome::new(
        pass,
        json!({
            "manifold": p.name,
            "grid": grid_n,
            "flat_metric_error": metric_error,
            "residuals": res,
            "adiabatic": adiabatic,
            "fibre_restriction": fibre,
            "equivariant": equivariant,
        }),
    ))
}

pub fn g2_classify(ctx: &Ctx, input: &Value) -> Result<Outcome, CliError> {
    let p = manifold("G6")?;
    let parsed: SmoothingInput = serde_json::from_value(input.clone())?;
    let parsed = match parsed {
        SmoothingInput::Class(c) => SmoothingInput::Class(TorusClass::new(c.rows).map_err(|e| CliError::Usage(e.to_string()))?),
        s => s,
    };
    match classify_smoothing(&p, &parsed, ctx.tol.get("section")) {
        Ok(c) => Ok(Outcome::new(true, json!({ "input": parsed, "classification": c }))),
        Err(e) => Ok(Outcome::failed(e)),
    }
}

pub fn g2_duality(ctx: &Ctx, grid_n: usize) -> Result<Outcome, CliError> {
    let p = manifold("G6")?;
    let report = match duality_crosscheck(&p, grid_n, &duality_samples()) {
        Ok(r) => r,
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let pass = report.bijection && report.component_match == 3 && report.max_parameter_error <= ctx.tol.get("parameter");
    let mut table = Table::new(
        "duality",
        &["line", "axis", "family", "z_re", "z_im", "log_abs_z", "ray_parameter", "parameter_error", "c_field", "ray_axis", "harmonic_tension"],
    );
    for r in &report.rows {
        table.push(vec![
            r.line.clone(),
            r.axis.to_string(),
            format!("{:?}", r.family),
            num(r.z[0]),
            num(r.z[1]),
            num(r.log_abs_z),
            num(r.ray_parameter),
            num(r.parameter_error),
            num(r.c_field),
            r.ray_axis.to_string(),
            num(r.harmonic_tension),
        ]);
    }
    let mut value = serde_json::to_value(&report)?;
    value["solver_tol"] = json!(SolveOptions::default().tol);
    let mut out = Outcome::new(pass, value);
    out.tables.push(table);
    Ok(out)
}

pub fn ale_demo(ctx: &Ctx, xi: [f64; 3], samples: usize) -> Result<Outcome, CliError> {
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let param = SmoothingParameter::new(xi);
    let points = match solve_level_set(&param, samples, &mut ctx.rng("ale-level-set")) {
        Ok(p) => p,
        Err(e) => return Ok(Outcome::failed(e)),
    };
    let chi = param.chi_c();
    let mut table = Table::new(
        "samples",
        &["index", "x0", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "u_re", "u_im", "v_re", "v_im", "w_re", "w_im", "defect_re", "defect_im"],
    );
    let mut level: f64 = 0.0;
    let mut singular: f64 = 0.0;
    let mut cs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let m = moment_map(p);
        level = level.max((0..3).map(|k| (m[k] - xi[k]).abs()).fold(0.0, f64::max));
        let (u, v, w) = complex_invariants(p);
        let defect = u * v - w * w;
        let scale = 1.0 + u.norm() * v.norm() + w.norm_sqr();
        singular = singular.max(defect.norm() / scale);
        if chi.norm() > 0.0 {
            cs.push(defect / (chi * chi));
        }
        let mut row = vec![i.to_string()];
        row.extend(p.to_vec().iter().map(|x| num(*x)));
        for z in [u, v, w, defect] {
            row.push(num(z.re));
            row.push(num(z.im));
        }
        table.push(row);
    }
    let freeness = freeness_check(&param);
    let (pass, deformed) = if cs.is_empty() {
        (singular <= ctx.tol.get("invariant"), Value::Null)
    } else {
        let mean = cs.iter().sum::<Complex64>() / cs.len() as f64;
        let spread = cs.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
        (spread <= ctx.tol.get("calibration"), json!({ "c": [mean.re, mean.im], "spread": spread }))
    };
    let mut out = Outcome::new(
        pass,
        json!({
            "xi": xi,
            "samples": samples,
            "max_level_residual": level,
            "max_singular_defect": singular,
            "deformed": deformed,
            "free": freeness.free,
        }),
    );
    out.tables.push(table);
    Ok(out)
}
