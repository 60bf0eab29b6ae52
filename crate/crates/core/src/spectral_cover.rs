//! Spectral and cameral covers of commuting Higgs fields.
//!
//! At each vertex the eigenvalue covectors of `(θ₁, θ₂, θ₃)` are the points
//! of the spectral cover over that vertex. Sheets are labelled by tracking
//! them along a spanning tree of the fundamental cube; the labels across the
//! lattice wraparound and under the deck maps give the monodromy.

use crate::char_variety::Representation;
use crate::higgs_harmonic::{Grid, HiggsError, HiggsField, MetricSection, Twist};
use crate::lie_core::{self, best_matching, weyl_canonical, LieError, WeylElement};
use crate::linalg::{self, c64, CMat};
use crate::platycosm::{mat_inv, transpose, IMat3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("θ components do not commute at vertex {vertex} (commutator {norm:e})")]
    NonCommuting { vertex: usize, norm: f64 },
    #[error("θ is not semisimple at vertex {vertex}: {reason}")]
    Defective { vertex: usize, reason: String },
    #[error("no unramified vertex left to evaluate")]
    RamifiedRegion,
    #[error("cover is partially ramified ({ramified} of {total} vertices); only unramified or totally ramified data can be reconstructed")]
    PartiallyRamified { ramified: usize, total: usize },
    #[error("the frame twist is not monomial in the sheet frame (defect {0:e})")]
    NotMonomial(f64),
    #[error("θ is not diagonal in a constant frame (residual {0:e})")]
    FrameNotConstant(f64),
    #[error(transparent)]
    Higgs(#[from] HiggsError),
}

pub const MERGE_TOL: f64 = 1e-8;

/// Per-vertex sheet covectors (`sheets[v][r]` = covector of sheet `r`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoverData {
    pub grid: Grid,
    pub n: usize,
    #[serde(with = "sheet_serde")]
    pub sheets: Vec<Vec<[Complex64; 3]>>,
    /// all covectors have vanishing imaginary part
    pub real: bool,
    pub ramified: Vec<bool>,
    pub merge_tol: f64,
    /// sheet relabeling across the wraparound along each lattice axis:
    /// continued sheet `i` equals stored sheet `lattice_monodromy[k][i]`
    pub lattice_monodromy: Vec<Vec<usize>>,
    /// per generator of the presentation: `R⁻ᵀ ξ_x[i]` is continued sheet `σ(i)` at `g·x`
    pub monodromy: Vec<Vec<usize>>,
    /// worst mismatch of the deck equivariance over unramified vertices
    pub equivariance_defect: f64,
}

impl SpectralCoverData {
    pub fn len(&self) -> usize {
        self.sheets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sheets.is_empty()
    }

    pub fn rows(&self, v: usize) -> Vec<Vec<Complex64>> {
        self.sheets[v].iter().map(|s| s.to_vec()).collect()
    }

    pub fn is_totally_ramified(&self) -> bool {
        self.sheets.iter().all(|sh| sh.iter().all(|s| sup(s, &sh[0]) <= self.merge_tol))
    }

    pub fn is_unramified(&self) -> bool {
        self.ramified.iter().all(|r| !r)
    }

    /// Orbits of the monodromy on the sheet labels: the connected components
    /// of the (unramified) spectral cover.
    pub fn components(&self) -> usize {
        let mut label: Vec<usize> = (0..self.n).collect();
        for perm in self.monodromy.iter().chain(&self.lattice_monodromy) {
            for (i, &j) in perm.iter().enumerate() {
                let (a, b) = (root(&label, i), root(&label, j));
                label[a.max(b)] = a.min(b);
            }
        }
        (0..self.n).filter(|i| root(&label, *i) == *i).count()
    }
}

fn root(label: &[usize], mut i: usize) -> usize {
    while label[i] != i {
        i = label[i];
    }
    i
}

fn sup(a: &[Complex64; 3], b: &[Complex64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn min_separation(sheets: &[[Complex64; 3]]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..sheets.len() {
        for j in 0..i {
            m = m.min(sup(&sheets[i], &sheets[j]));
        }
    }
    m
}

fn rows_of(sheets: &[[Complex64; 3]]) -> Vec<Vec<Complex64>> {
    sheets.iter().map(|s| s.to_vec()).collect()
}

fn to_sheets(rows: &[Vec<Complex64>]) -> Vec<[Complex64; 3]> {
    rows.iter().map(|r| [r[0], r[1], r[2]]).collect()
}

fn act_covector(m: &IMat3, xi: &[Complex64; 3]) -> [Complex64; 3] {
    [0, 1, 2].map(|k| (0..3).map(|l| xi[l] * m[k][l] as f64).sum())
}

fn inverse_perm(p: &[usize]) -> Vec<usize> {
    let mut out = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        out[j] = i;
    }
    out
}

// a ∘ b
fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&j| a[j]).collect()
}

/// Spectral cover of a commuting Higgs field. `tol` bounds the relative
/// commutator `‖[θᵢ,θⱼ]‖ ≤ tol·scale²`.
pub fn spectral_cover(theta: &HiggsField, tol: f64) -> Result<SpectralCoverData, SpectralError> {
    let g = &theta.grid;
    let n = theta.n();
    let scale = theta.comps.iter().map(linalg::fro).fold(0.0, f64::max);
    let merge_tol = MERGE_TOL * scale.max(f64::MIN_POSITIVE);
    let mut raw: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(g.len());
    for v in 0..g.len() {
        let mats = [theta.theta(v, 0).clone(), theta.theta(v, 1).clone(), theta.theta(v, 2).clone()];
        let d = lie_core::simultaneous_diagonalize(&mats, tol).map_err(|e| match e {
            LieError::NonCommuting { norm, .. } => SpectralError::NonCommuting { vertex: v, norm },
            other => SpectralError::Defective { vertex: v, reason: other.to_string() },
        })?;
        raw.push(d.eigen_tuples);
    }
    // spanning-tree tracking inside the cube
    let mut ordered: Vec<Option<Vec<Vec<Complex64>>>> = vec![None; g.len()];
    ordered[0] = Some(weyl_canonical(&raw[0]));
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for d in 0..3 {
            for s in [1, -1] {
                let (u, wrap) = g.neighbor(v, d, s);
                if wrap != 0 || ordered[u].is_some() {
                    continue;
                }
                let parent = ordered[v].as_ref().expect("visited");
                let (p, _) = best_matching(parent, &raw[u]);
                ordered[u] = Some(p.iter().map(|&j| raw[u][j].clone()).collect());
                queue.push_back(u);
            }
        }
    }
    let sheets: Vec<Vec<[Complex64; 3]>> = ordered.into_iter().map(|r| to_sheets(&r.expect("cube is connected"))).collect();
    let ramified: Vec<bool> = sheets.iter().map(|s| min_separation(s) <= merge_tol).collect();
    let real = sheets.iter().flatten().flatten().all(|z| z.im.abs() <= merge_tol.max(1e-12 * scale));

    let base = (0..g.len()).find(|v| !ramified[*v]);
    let identity: Vec<usize> = (0..n).collect();
    // lattice monodromy: at a vertex on the top face, match the continued sheets to the stored ones
    let mut lattice_monodromy = vec![identity.clone(); 3];
    if base.is_some() {
        for (d, mono) in lattice_monodromy.iter_mut().enumerate() {
            let mut cands: Vec<usize> = (0..g.len()).filter(|v| g.coords(*v)[d] == g.n - 1).collect();
            cands.retain(|v| !ramified[*v] && !ramified[g.neighbor(*v, d, 1).0]);
            if let Some(&v) = cands.first() {
                let (u, _) = g.neighbor(v, d, 1);
                *mono = best_matching(&rows_of(&sheets[v]), &rows_of(&sheets[u])).0;
            }
        }
    }
    let tw = Twist::new(g, &theta.twist)?;
    let p = &g.presentation;
    let mut monodromy = Vec::new();
    let mut defect: f64 = 0.0;
    for gen in &p.gens {
        let el = p.holonomy_elements().into_iter().position(|e| e.rot == gen.rot).expect("generator holonomy");
        let forms = transpose(&mat_inv(&gen.rot));
        // deck map of the generator itself: holonomy lift composed with a lattice element
        let lift = &p.holonomy_elements()[el].lift;
        let aff_lift = p.eval(lift).expect("lift");
        let shift = p.integral_lattice_coords(&gen.compose(&aff_lift.inverse()).trans).expect("generator differs from its lift by a lattice element");
        let targets = &tw.deck[el].targets;
        let mut perm_found: Option<Vec<usize>> = None;
        for v in 0..g.len() {
            let (y, _) = &targets[v];
            if ramified[v] || ramified[*y] {
                continue;
            }
            let moved: Vec<Vec<Complex64>> = sheets[v].iter().map(|s| act_covector(&forms, s).to_vec()).collect();
            // stored sheets at y, relabeled by the lattice part of g·x = y + t (t includes the generator's own shift)
            let (_, t) = deck_shift(g, &aff_lift, v);
            let total: [i64; 3] = [0, 1, 2].map(|k| t[k] + shift[k]);
            let tau = lattice_power(&lattice_monodromy, &total);
            // continued label i ↔ stored label tau[i]
            let continued: Vec<Vec<Complex64>> = (0..n).map(|i| sheets[*y][tau[i]].to_vec()).collect();
            let (perm, d) = best_matching(&moved, &continued);
            match &perm_found {
                None => {
                    defect = defect.max(d);
                    perm_found = Some(perm);
                }
                Some(p0) => {
                    let dd = (0..n).map(|i| sup(&to_sheets(&moved)[i], &to_sheets(&continued)[p0[i]])).fold(0.0, f64::max);
                    defect = defect.max(dd);
                }
            }
        }
        monodromy.push(perm_found.unwrap_or_else(|| identity.clone()));
    }
    Ok(SpectralCoverData { grid: g.clone(), n, sheets, real, ramified, merge_tol, lattice_monodromy, monodromy, equivariance_defect: defect })
}

/// `g·x = y + t` for the grid vertex `x`: returns `y` and the lattice part `t`.
pub fn deck_shift(g: &Grid, aff: &crate::platycosm::AffineIsometry, v: usize) -> (usize, [i64; 3]) {
    let n = g.n as i64;
    let c = g.coords(v);
    let x = [0, 1, 2].map(|k| crate::platycosm::q(c[k] as i64, n));
    let gx = aff.apply(&x);
    let mut yc = [0usize; 3];
    let mut t = [0i64; 3];
    for k in 0..3 {
        let s = (gx[k] * crate::platycosm::qi(n)).to_integer();
        yc[k] = s.rem_euclid(n) as usize;
        t[k] = s.div_euclid(n);
    }
    (g.index(yc), t)
}

fn lattice_power(mono: &[Vec<usize>], t: &[i64; 3]) -> Vec<usize> {
    let n = mono[0].len();
    let mut acc: Vec<usize> = (0..n).collect();
    for k in 0..3 {
        let step = if t[k] >= 0 { mono[k].clone() } else { inverse_perm(&mono[k]) };
        for _ in 0..t[k].abs() {
            acc = compose(&acc, &step);
        }
    }
    acc
}

/// Vertices where two sheets are within `tol`.
pub fn ramification_locus(cover: &SpectralCoverData, tol: f64) -> Vec<usize> {
    (0..cover.len()).filter(|v| min_separation(&cover.sheets[*v]) <= tol).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianReport {
    pub residual: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Discrete curl of every sheet's covector field: the pullback of the
/// canonical symplectic form to the sheet graphs. Vertices whose stencil
/// touches a ramified vertex are skipped unless the cover is totally ramified.
pub fn lagrangian_residual(cover: &SpectralCoverData) -> Result<LagrangianReport, SpectralError> {
    let g = &cover.grid;
    let total = cover.is_totally_ramified();
    let mut residual: f64 = 0.0;
    let (mut evaluated, mut skipped) = (0, 0);
    for v in 0..g.len() {
        let mut stencil = vec![v];
        for d in 0..3 {
            for s in [1, -1] {
                stencil.push(g.neighbor(v, d, s).0);
            }
        }
        if !total && stencil.iter().any(|u| cover.ramified[*u]) {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        let here = rows_of(&cover.sheets[v]);
        // neighbour sheets matched to the local labels
        let nb = |d: usize, s: i32| -> Vec<[Complex64; 3]> {
            let (u, _) = g.neighbor(v, d, s);
            let there = rows_of(&cover.sheets[u]);
            let (p, _) = best_matching(&here, &there);
            p.iter().map(|&j| cover.sheets[u][j]).collect()
        };
        let plus: Vec<Vec<[Complex64; 3]>> = (0..3).map(|d| nb(d, 1)).collect();
        let minus: Vec<Vec<[Complex64; 3]>> = (0..3).map(|d| nb(d, -1)).collect();
        for r in 0..cover.n {
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let di_xj = (plus[i][r][j] - minus[i][r][j]) / (2.0 * g.h);
                let dj_xi = (plus[j][r][i] - minus[j][r][i]) / (2.0 * g.h);
                residual = residual.max((di_xj - dj_xi).norm());
            }
        }
    }
    if evaluated == 0 {
        return Err(SpectralError::RamifiedRegion);
    }
    Ok(LagrangianReport { residual, evaluated, skipped })
}

/// Homogeneous polynomial in `(s₁, s₂, s₃)`: exponent triple ↦ coefficient.
pub type Poly = BTreeMap<[u32; 3], Complex64>;

fn poly_add(a: &mut Poly, b: &Poly, scale: Complex64) {
    for (k, v) in b {
        *a.entry(*k).or_insert(c64(0.0, 0.0)) += v * scale;
    }
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ka, va) in a {
        for (kb, vb) in b {
            let k = [ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2]];
            *out.entry(k).or_insert(c64(0.0, 0.0)) += va * vb;
        }
    }
    out
}

fn poly_const(c: Complex64) -> Poly {
    Poly::from([([0, 0, 0], c)])
}

fn monomial(word: &[usize]) -> [u32; 3] {
    let mut e = [0u32; 3];
    for &i in word {
        e[i] += 1;
    }
    e
}

// elementary symmetric polynomials from power sums via Newton's identities
fn elementary_from_power_sums(p: &[Poly], n: usize) -> Vec<Poly> {
    let mut e = vec![poly_const(c64(1.0, 0.0))];
    for m in 1..=n {
        let mut acc = Poly::new();
        for i in 1..=m {
            let sign = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 };
            poly_add(&mut acc, &poly_mul(&e[m - i], &p[i]), c64(sign, 0.0));
        }
        let inv = c64(1.0 / m as f64, 0.0);
        e.push(acc.into_iter().map(|(k, v)| (k, v * inv)).collect());
    }
    e
}

fn words(len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out.into_iter().flat_map(|w| (0..3).map(move |i| [w.clone(), vec![i]].concat())).collect();
    }
    out
}

/// Invariant coefficients `p_j(s)` (`j = 2..n`) of
/// `det(λ − Σ sᵢθᵢ) = λⁿ + p₂(s)λⁿ⁻² + … + pₙ(s)` at one vertex.
pub fn hitchin_invariants(mats: &[CMat; 3]) -> Vec<Poly> {
    let n = mats[0].nrows();
    let mut power_sums = vec![Poly::new()];
    for m in 1..=n {
        let mut ps = Poly::new();
        for w in words(m) {
            let mut prod = CMat::identity(n, n);
            for &i in &w {
                prod *= &mats[i];
            }
            *ps.entry(monomial(&w)).or_insert(c64(0.0, 0.0)) += linalg::trace(&prod);
        }
        power_sums.push(ps);
    }
    coefficients(&power_sums, n)
}

fn coefficients(power_sums: &[Poly], n: usize) -> Vec<Poly> {
    let e = elementary_from_power_sums(power_sums, n);
    (2..=n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            e[j].iter().map(|(k, v)| (*k, v * sign)).collect()
        })
        .collect()
}

/// The same invariants from sheet covectors: eigenvalues of `Σ sᵢθᵢ` are `ξ_r·s`.
pub fn invariants_from_sheets(sheets: &[[Complex64; 3]]) -> Vec<Poly> {
    let n = sheets.len();
    let mut power_sums = vec![Poly::new()];
    for m in 1..=n {
        let mut ps = Poly::new();
        for xi in sheets {
            for w in words(m) {
                let c: Complex64 = w.iter().map(|&i| xi[i]).product();
                *ps.entry(monomial(&w)).or_insert(c64(0.0, 0.0)) += c;
            }
        }
        power_sums.push(ps);
    }
    coefficients(&power_sums, n)
}

pub fn hitchin_map(theta: &HiggsField) -> Vec<Vec<Poly>> {
    (0..theta.grid.len())
        .map(|v| hitchin_invariants(&[theta.theta(v, 0).clone(), theta.theta(v, 1).clone(), theta.theta(v, 2).clone()]))
        .collect()
}

/// Sup distance between two invariant fields (missing monomials count as zero).
pub fn poly_field_distance(a: &[Vec<Poly>], b: &[Vec<Poly>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        for (x, y) in pa.iter().zip(pb) {
            for k in x.keys().chain(y.keys()) {
                let d = x.get(k).copied().unwrap_or_default() - y.get(k).copied().unwrap_or_default();
                worst = worst.max(d.norm());
            }
        }
    }
    worst
}

/// Spectral data `(π, L, k̃, Ã)` in a constant sheet frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDataBundle {
    pub cover: SpectralCoverData,
    /// `k̃` per vertex per sheet
    pub line_metric: Vec<Vec<f64>>,
    /// `Ã` per edge `3v + d` per sheet, unit modulus
    #[serde(with = "crate::linalg::complex_serde")]
    pub line_connection: Vec<Vec<Complex64>>,
    /// monodromy of `π_*L` in the sheet frame (monomial matrices)
    pub frame_twist: Representation,
    pub embedding_residual: f64,
}

/// Build spectral data from a Higgs field that is diagonal in one constant
/// frame (the eigenbasis at the first unramified vertex), with line metrics
/// read from `k` when given.
pub fn spectral_data(theta: &HiggsField, k: Option<&MetricSection>, tol: f64) -> Result<SpectralDataBundle, SpectralError> {
    let mut cover = spectral_cover(theta, tol)?;
    let n = cover.n;
    let g = &theta.grid;
    let base = (0..g.len()).find(|v| !cover.ramified[*v]);
    let basis = match base {
        Some(v) => {
            let mats = [theta.theta(v, 0).clone(), theta.theta(v, 1).clone(), theta.theta(v, 2).clone()];
            let d = lie_core::simultaneous_diagonalize(&mats, tol).map_err(|e| SpectralError::Defective { vertex: v, reason: e.to_string() })?;
            // order columns like the tracked sheets at v
            let (p, _) = best_matching(&cover.rows(v), &d.eigen_tuples);
            let mut b = CMat::zeros(n, n);
            for (i, &j) in p.iter().enumerate() {
                b.set_column(i, &d.basis.column(j));
            }
            b
        }
        None => CMat::identity(n, n),
    };
    let bi = linalg::inverse(&basis).ok_or(SpectralError::FrameNotConstant(f64::INFINITY))?;
    let mut embedding: f64 = 0.0;
    // sheets are relabeled by the frame, which stays consistent across ramified points
    for v in 0..g.len() {
        let mut frame_sheets = vec![[c64(0.0, 0.0); 3]; n];
        for i in 0..3 {
            let d = &bi * theta.theta(v, i) * &basis;
            for (r, sheet) in frame_sheets.iter_mut().enumerate() {
                sheet[i] = d[(r, r)];
            }
            embedding = embedding.max(linalg::max_abs(&(d.clone() - linalg::from_diag(&d.diagonal().iter().cloned().collect::<Vec<_>>()))));
        }
        embedding = embedding.max(lie_core::orbit_distance(&rows_of(&frame_sheets), &cover.rows(v)));
        cover.sheets[v] = frame_sheets;
    }
    let scale = theta.comps.iter().map(linalg::fro).fold(0.0, f64::max).max(1.0);
    if embedding > 1e-8 * scale {
        return Err(SpectralError::FrameNotConstant(embedding));
    }
    let mut frame_twist = theta.twist.conjugate(&bi);
    let monomial_defect = frame_twist
        .images
        .iter()
        .map(|m| (0..n).map(|c| {
            let col: Vec<f64> = (0..n).map(|r| m[(r, c)].norm()).collect();
            let big = col.iter().cloned().fold(0.0, f64::max);
            col.iter().filter(|x| **x < big).cloned().fold(0.0, f64::max)
        }).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if monomial_defect > 1e-8 {
        return Err(SpectralError::NotMonomial(monomial_defect));
    }
    for m in frame_twist.images.iter_mut() {
        for x in m.iter_mut() {
            if x.norm() < 1e-12 {
                *x = c64(0.0, 0.0);
            }
        }
    }
    let line_metric = (0..g.len())
        .map(|v| match k {
            Some(k) => {
                let local = bi.clone() * &k.k[v] * bi.adjoint();
                (0..n).map(|r| local[(r, r)].re).collect()
            }
            None => vec![1.0; n],
        })
        .collect();
    let tw = Twist::new(g, &frame_twist)?;
    let mut line_connection = Vec::with_capacity(3 * g.len());
    for v in 0..g.len() {
        for d in 0..3 {
            let (_, wrap) = g.neighbor(v, d, 1);
            line_connection.push(
                (0..n)
                    .map(|r| {
                        if wrap == 0 {
                            c64(1.0, 0.0)
                        } else {
                            let z = tw.lattice_inv[d][(r, r)];
                            if z.norm() > 0.0 {
                                z / z.norm()
                            } else {
                                c64(1.0, 0.0)
                            }
                        }
                    })
                    .collect(),
            );
        }
    }
    Ok(SpectralDataBundle { cover, line_metric, line_connection, frame_twist, embedding_residual: embedding })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub theta: HiggsField,
    pub k: MetricSection,
    #[serde(with = "crate::linalg::complex_serde")]
    pub transport: Vec<Vec<Complex64>>,
}

/// `E = π_*L`, `θ = π_*τ`: θ is the diagonal matrix of sheet covectors in the
/// sheet frame, `k = diag(k̃)` rescaled to unit determinant.
pub fn reconstruct(sd: &SpectralDataBundle) -> Result<Reconstruction, SpectralError> {
    let cover = &sd.cover;
    let ramified = cover.ramified.iter().filter(|r| **r).count();
    if ramified != 0 && !cover.is_totally_ramified() {
        return Err(SpectralError::PartiallyRamified { ramified, total: cover.len() });
    }
    let n = cover.n;
    let comps = cover
        .sheets
        .iter()
        .flat_map(|sh| (0..3).map(move |i| linalg::from_diag(&sh.iter().map(|s| s[i]).collect::<Vec<_>>())))
        .collect();
    let theta = HiggsField { grid: cover.grid.clone(), comps, twist: sd.frame_twist.clone() };
    let k = sd
        .line_metric
        .iter()
        .map(|lm| {
            let d: f64 = lm.iter().product();
            linalg::from_real_diag(&lm.iter().map(|x| x / d.powf(1.0 / n as f64)).collect::<Vec<_>>())
        })
        .collect();
    Ok(Reconstruction { theta, k: MetricSection { grid: cover.grid.clone(), k }, transport: sd.line_connection.clone() })
}

/// Sheet distance after one global relabeling fixed at the first vertex.
pub fn sheet_distance(a: &SpectralCoverData, b: &SpectralCoverData) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let (p, _) = best_matching(&a.rows(0), &b.rows(0));
    let mut worst: f64 = 0.0;
    for v in 0..a.len() {
        for i in 0..a.n {
            worst = worst.max(sup(&a.sheets[v][i], &b.sheets[v][p[i]]));
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameralCoverData {
    pub grid: Grid,
    /// ordered eigen-tuples per vertex, `n` rows of 3 covector components
    #[serde(with = "sheet_serde")]
    pub tuples: Vec<Vec<[Complex64; 3]>>,
    /// Weyl-valued cocycle on the generators of the presentation
    pub cocycle: Vec<WeylElement>,
    pub lattice_cocycle: Vec<WeylElement>,
    /// cocycle composes to the identity on every defining relation
    pub relations_ok: bool,
    /// connected components when unramified: `|W| / |image|`
    pub components: usize,
}

pub fn cameral_cover(theta: &HiggsField, tol: f64) -> Result<CameralCoverData, SpectralError> {
    let cover = spectral_cover(theta, tol)?;
    let p = &theta.grid.presentation;
    let n = cover.n;
    let eval = |w: &[i32]| -> Vec<usize> {
        let mut acc: Vec<usize> = (0..n).collect();
        for &l in w {
            let s = &cover.monodromy[l.unsigned_abs() as usize - 1];
            let s = if l > 0 { s.clone() } else { inverse_perm(s) };
            acc = compose(&acc, &s);
        }
        acc
    };
    let identity: Vec<usize> = (0..n).collect();
    let relations_ok = p.relations().iter().all(|r| eval(r) == identity)
        && p.lattice_words.iter().enumerate().all(|(k, w)| eval(w) == cover.lattice_monodromy[k]);
    // image of the cocycle: closure of the generator permutations
    let mut image: Vec<Vec<usize>> = vec![identity.clone()];
    let mut frontier = image.clone();
    while let Some(x) = frontier.pop() {
        for s in cover.monodromy.iter().chain(&cover.lattice_monodromy) {
            let y = compose(s, &x);
            if !image.contains(&y) {
                image.push(y.clone());
                frontier.push(y);
            }
        }
    }
    let order: usize = (1..=n).product();
    Ok(CameralCoverData {
        grid: cover.grid.clone(),
        tuples: cover.sheets.clone(),
        cocycle: cover.monodromy.iter().map(|m| WeylElement { perm: m.clone() }).collect(),
        lattice_cocycle: cover.lattice_monodromy.iter().map(|m| WeylElement { perm: m.clone() }).collect(),
        relations_ok,
        components: order / image.len(),
    })
}

/// Σ_n-quotient distance between cameral tuples and spectral sheets.
pub fn quotient_distance(cam: &CameralCoverData, cover: &SpectralCoverData) -> f64 {
    cam.tuples
        .iter()
        .zip(&cover.sheets)
        .map(|(a, b)| lie_core::orbit_distance(&rows_of(a), &rows_of(b)))
        .fold(0.0, f64::max)
}

pub mod sheet_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type Sheets = Vec<Vec<[Complex64; 3]>>;

    pub fn serialize<S: Serializer>(v: &Sheets, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[[f64; 2]; 3]>> = v.iter().map(|sh| sh.iter().map(|c| c.map(|z| [z.re, z.im])).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Sheets, D::Error> {
        let rows: Vec<Vec<[[f64; 2]; 3]>> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|sh| sh.into_iter().map(|c| c.map(|z| Complex64::new(z[0], z[1]))).collect()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platycosm::presentation;

    fn g1_trivial(n: usize) -> Representation {
        Representation::trivial(presentation("G1").unwrap(), n)
    }

    fn diag2(a: f64) -> CMat {
        linalg::from_real_diag(&[a, -a])
    }

    #[test]
    fn zero_field_is_totally_ramified() {
        let g = Grid::new(&presentation("G1").unwrap(), 4).unwrap();
        let theta = HiggsField::new(g.clone(), g1_trivial(2), |_| [CMat::zeros(2, 2), CMat::zeros(2, 2), CMat::zeros(2, 2)]);
        let cover = spectral_cover(&theta, 1e-10).unwrap();
        assert!(cover.ramified.iter().all(|r| *r));
        assert!(cover.is_totally_ramified());
        assert_eq!(ramification_locus(&cover, 1e-12).len(), g.len());
        let sd = spectral_data(&theta, None, 1e-10).unwrap();
        let back = reconstruct(&sd).unwrap();
        assert!(sheet_distance(&spectral_cover(&back.theta, 1e-10).unwrap(), &cover) <= 1e-9);
        assert!(hitchin_map(&theta).iter().flatten().flat_map(|p| p.values()).all(|c| c.norm() == 0.0));
    }

    #[test]
    fn constant_field_two_sheets() {
        let g = Grid::new(&presentation("G1").unwrap(), 4).unwrap();
        let theta = HiggsField::new(g, g1_trivial(2), |_| [diag2(0.5), diag2(-0.2), diag2(0.3)]);
        let cover = spectral_cover(&theta, 1e-10).unwrap();
        assert!(cover.is_unramified() && cover.real);
        assert!(cover.monodromy.iter().chain(&cover.lattice_monodromy).all(|m| m == &vec![0, 1]));
        assert_eq!(cover.components(), 2);
        assert!(lagrangian_residual(&cover).unwrap().residual <= 1e-14);
        let cam = cameral_cover(&theta, 1e-10).unwrap();
        assert!(cam.relations_ok);
        assert_eq!(cam.components, 2);
        assert!(quotient_distance(&cam, &cover) < 1e-12);
    }

    #[test]
    fn sine_field_ramifies_on_two_planes() {
        let g = Grid::new(&presentation("G1").unwrap(), 8).unwrap();
        let theta = HiggsField::new(g.clone(), g1_trivial(2), |x| {
            [diag2((2.0 * std::f64::consts::PI * x[0]).sin()), CMat::zeros(2, 2), CMat::zeros(2, 2)]
        });
        let cover = spectral_cover(&theta, 1e-10).unwrap();
        let locus = ramification_locus(&cover, 1e-8);
        assert_eq!(locus.len(), 2 * 64);
        assert!(locus.iter().all(|v| g.coords(*v)[0].is_multiple_of(4)));
        let sd = spectral_data(&theta, None, 1e-10).unwrap();
        assert!(matches!(reconstruct(&sd), Err(SpectralError::PartiallyRamified { .. })));
    }

    #[test]
    fn hitchin_quadratic_invariant() {
        let mats = [diag2(0.7), CMat::zeros(2, 2), CMat::zeros(2, 2)];
        let inv = hitchin_invariants(&mats);
        assert_eq!(inv.len(), 1);
        assert!((inv[0][&[2, 0, 0]] - c64(-0.49, 0.0)).norm() < 1e-14);
        assert!(inv[0].iter().filter(|(k, _)| **k != [2, 0, 0]).all(|(_, v)| v.norm() < 1e-14));
        let sheets = [[c64(0.7, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)], [c64(-0.7, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]];
        assert!(poly_field_distance(&[inv], &[invariants_from_sheets(&sheets)]) < 1e-14);
    }

    #[test]
    fn g6_axis_field_exchanges_sheets() {
        let p = presentation("G6").unwrap();
        let z = c64(2.5, 1.0);
        let c = crate::char_variety::TorusClass::sl2([z, c64(-1.0, 0.0), c64(-1.0, 0.0)]);
        let rep = crate::char_variety::lift_representation(&p, &c).unwrap();
        let g = Grid::new(&p, 4).unwrap();
        let a = z.norm().ln();
        let theta = HiggsField::new(g, rep, |_| [diag2(a), CMat::zeros(2, 2), CMat::zeros(2, 2)]);
        assert!(theta.twist_residual().unwrap() < 1e-12);
        let cover = spectral_cover(&theta, 1e-10).unwrap();
        // α fixes dx₁, β reverses it
        assert_eq!(cover.monodromy, vec![vec![0, 1], vec![1, 0]]);
        assert!(cover.equivariance_defect < 1e-12);
        assert_eq!(cover.components(), 1);
        let cam = cameral_cover(&theta, 1e-10).unwrap();
        assert!(cam.relations_ok);
        assert_eq!(cam.components, 1);
        let sd = spectral_data(&theta, None, 1e-10).unwrap();
        let back = reconstruct(&sd).unwrap();
        assert!(back.theta.twist_residual().unwrap() < 1e-12);
        assert!(sheet_distance(&spectral_cover(&back.theta, 1e-10).unwrap(), &cover) <= 1e-9);
    }

    fn wavy_fixture(n: usize) -> HiggsField {
        let g = Grid::new(&presentation("G1").unwrap(), n).unwrap();
        HiggsField::new(g, g1_trivial(2), |x| {
            [diag2(3.0 + 0.5 * (2.0 * std::f64::consts::PI * x[1]).sin()), diag2(1.0), diag2(-2.0)]
        })
    }

    #[test]
    fn lagrangian_iff_closed() {
        for theta in [crate::fixtures::gradient_field(8, [3.0, 1.0, -2.0], 0.1).unwrap(), wavy_fixture(8)] {
            let closed = crate::higgs_harmonic::fterm_residual(&theta).unwrap().closed;
            let cover = spectral_cover(&theta, 1e-10).unwrap();
            assert!(cover.is_unramified());
            let lag = lagrangian_residual(&cover).unwrap().residual;
            assert_eq!(closed <= 1e-10, lag <= 1e-10, "closed {closed:e} lagrangian {lag:e}");
        }
        assert!(lagrangian_residual(&spectral_cover(&wavy_fixture(8), 1e-10).unwrap()).unwrap().residual > 1.0);
    }

    #[test]
    fn invariants_are_conjugation_invariant() {
        use rand::Rng;
        use crate::rng::{random_invertible, SeedStream};
        let mut rng = SeedStream::new(7).fork("spectral-invariants");
        for _ in 0..200 {
            let n = 2 + rng.random_range(0..2usize);
            let b = random_invertible(&mut rng, n);
            let bi = linalg::inverse(&b).unwrap();
            let diags: Vec<Vec<Complex64>> = (0..3).map(|_| (0..n).map(|_| c64(crate::rng::normal(&mut rng), crate::rng::normal(&mut rng))).collect()).collect();
            let mats = [0, 1, 2].map(|i| &b * linalg::from_diag(&diags[i]) * &bi);
            let sheets: Vec<[Complex64; 3]> = (0..n).map(|r| [diags[0][r], diags[1][r], diags[2][r]]).collect();
            let from_mats = hitchin_invariants(&mats);
            assert!(poly_field_distance(std::slice::from_ref(&from_mats), &[invariants_from_sheets(&sheets)]) < 1e-9);
        }
    }
}
