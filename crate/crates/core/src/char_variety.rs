//! Character varieties of Bieberbach groups in SL(n,C).
//!
//! A representation is stored by its generator images. Lattice images are
//! recovered by evaluating the presentation's lattice words, so every
//! relation is a word in the generators only.
//!
//! Lifting a fixed torus class works in two stages. The linear conjugation
//! equations `S·ρ(e_k) = ρ(g e_k g⁻¹)·S` are solved first; for a regular
//! class their solutions are monomial matrices. The remaining relations are
//! then binomial in the monomial coefficients and are solved exactly in log
//! coordinates.

use crate::lie_core::{self, orbit_distance, weyl_canonical, LieContext, LieError, WeylElement};
use crate::linalg::{self, c64, cmat_serde, complex_serde, CMat};
use crate::platycosm::{free_reduce, HolonomyElement, IMat3, PlatycosmPresentation, Word};
use crate::smith::{solve_binomial, TorusComponent};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharError {
    #[error("lattice images do not commute (commutator norm {0:e})")]
    NonCommutingLattice(f64),
    #[error("lattice images are not simultaneously diagonalizable: {0}")]
    DefectiveLattice(String),
    #[error("no lift: {0}")]
    NoLift(String),
    #[error("centralizer of the lattice image is larger than a maximal torus; the lift is not determined")]
    CentralizerTooBig,
    #[error("class is not fixed by the holonomy (distance {0:e})")]
    NotFixed(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed representation: {0}")]
    Malformed(String),
}

pub const CLASS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub ctx: LieContext,
    pub presentation: PlatycosmPresentation,
    #[serde(with = "cmat_serde::vec")]
    pub images: Vec<CMat>,
}

impl Representation {
    pub fn new(presentation: PlatycosmPresentation, images: Vec<CMat>) -> Result<Self, CharError> {
        let n = images.first().map(|m| m.nrows()).ok_or_else(|| CharError::Malformed("no images".into()))?;
        let ctx = LieContext::new(n).map_err(|e| CharError::Malformed(e.to_string()))?;
        if images.len() != presentation.gen_count() {
            return Err(CharError::Malformed(format!(
                "{} images for {} generators",
                images.len(),
                presentation.gen_count()
            )));
        }
        for (i, m) in images.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(CharError::Malformed(format!("image {i} has the wrong shape")));
            }
            let d = linalg::det(m);
            if (d - c64(1.0, 0.0)).norm() > 1e-10 {
                return Err(CharError::Malformed(format!("image {i} has determinant {d}")));
            }
        }
        Ok(Representation { ctx, presentation, images })
    }

    pub fn trivial(presentation: PlatycosmPresentation, n: usize) -> Self {
        let images = vec![CMat::identity(n, n); presentation.gen_count()];
        Representation { ctx: LieContext::new(n).expect("n >= 2"), presentation, images }
    }

    pub fn n(&self) -> usize {
        self.ctx.n
    }

    fn letter(&self, l: i32) -> CMat {
        let m = &self.images[l.unsigned_abs() as usize - 1];
        if l > 0 {
            m.clone()
        } else {
            linalg::inverse(m).expect("unit determinant")
        }
    }

    pub fn eval(&self, word: &[i32]) -> CMat {
        let n = self.n();
        let mut acc = CMat::identity(n, n);
        for &l in word {
            acc *= self.letter(l);
        }
        acc
    }

    pub fn lattice_images(&self) -> Vec<CMat> {
        self.presentation.lattice_words.iter().map(|w| self.eval(w)).collect()
    }

    /// `g ρ g⁻¹`.
    pub fn conjugate(&self, g: &CMat) -> Self {
        let gi = linalg::inverse(g).expect("invertible conjugator");
        let mut out = self.clone();
        out.images = self.images.iter().map(|m| g * m * &gi).collect();
        out
    }

    /// `ρ ∘ C_h̃` with `C_h̃(γ) = h̃ γ h̃⁻¹`.
    pub fn precompose_conjugation(&self, lift: &[i32]) -> Self {
        let s = self.eval(lift);
        let si = linalg::inverse(&s).expect("unit determinant");
        let mut out = self.clone();
        out.images = self.images.iter().map(|m| &s * m * &si).collect();
        out
    }
}

/// max over defining relations `r` of ‖ρ(r) − I‖.
pub fn relation_residual(rep: &Representation) -> f64 {
    let n = rep.n();
    rep.presentation
        .relations()
        .iter()
        .map(|r| linalg::fro(&(rep.eval(r) - CMat::identity(n, n))))
        .fold(0.0, f64::max)
}

/// A point of `(C*)^{3n} / Σ_n`: row `i` holds the i-th common eigenvalue
/// of the three lattice images. Rows are kept in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusClass {
    pub n: usize,
    #[serde(with = "complex_serde")]
    pub rows: Vec<Vec<Complex64>>,
}

impl TorusClass {
    pub fn new(rows: Vec<Vec<Complex64>>) -> Result<Self, CharError> {
        let n = rows.len();
        if n < 2 || rows.iter().any(|r| r.len() != 3) {
            return Err(CharError::Malformed("expected n >= 2 rows of 3 eigenvalues".into()));
        }
        for k in 0..3 {
            let p: Complex64 = rows.iter().map(|r| r[k]).product();
            if (p - c64(1.0, 0.0)).norm() > 1e-10 * rows.iter().map(|r| r[k].norm()).fold(1.0, f64::max) {
                return Err(CharError::Malformed(format!("coordinate {k} does not have product 1")));
            }
        }
        Ok(TorusClass { n, rows: weyl_canonical(&rows) })
    }

    /// The SL(2) class `[(z₁,z₂,z₃)]`.
    pub fn sl2(z: [Complex64; 3]) -> Self {
        let inv: Vec<Complex64> = z.iter().map(|x| x.inv()).collect();
        TorusClass::new(vec![z.to_vec(), inv]).expect("product one by construction")
    }

    pub fn coordinate(&self, k: usize) -> Vec<Complex64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn distance(&self, other: &TorusClass) -> f64 {
        orbit_distance(&self.rows, &other.rows)
    }

    fn scale(&self) -> f64 {
        self.rows.iter().flatten().map(|z| z.norm()).fold(1.0, f64::max)
    }

    /// All rows pairwise distinct: the centralizer of the lattice image is a maximal torus.
    pub fn is_regular(&self) -> bool {
        let s = self.scale();
        (0..self.n).all(|i| {
            (0..i).all(|j| self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) > CLASS_TOL * s)
        })
    }

    pub fn is_central(&self) -> bool {
        let s = self.scale();
        self.rows.iter().all(|r| r.iter().zip(&self.rows[0]).all(|(a, b)| (a - b).norm() <= CLASS_TOL * s))
    }
}

pub fn restrict_to_lattice(rep: &Representation) -> Result<TorusClass, CharError> {
    let lat = rep.lattice_images();
    let scale = lat.iter().map(linalg::fro).fold(0.0, f64::max);
    for i in 0..3 {
        for j in i + 1..3 {
            let c = linalg::fro(&linalg::commutator(&lat[i], &lat[j]));
            if c > 1e-9 * scale * scale {
                return Err(CharError::NonCommutingLattice(c));
            }
        }
    }
    let d = lie_core::simultaneous_diagonalize(&lat, 1e-9).map_err(|e| match e {
        LieError::NonCommuting { norm, .. } => CharError::NonCommutingLattice(norm),
        other => CharError::DefectiveLattice(other.to_string()),
    })?;
    TorusClass::new(d.eigen_tuples)
}

/// Exponent matrix `M` with `h e_k h⁻¹ = Σ_j M[j][k] e_j`.
fn lattice_matrix(p: &PlatycosmPresentation, lift: &[i32]) -> IMat3 {
    let rot = p.eval(lift).expect("valid lift word").rot;
    p.lattice_action(&rot)
}

fn act_rows(rows: &[Vec<Complex64>], m: &IMat3) -> Vec<Vec<Complex64>> {
    rows.iter()
        .map(|r| (0..3).map(|k| (0..3).map(|j| r[j].powi(m[j][k] as i32)).product()).collect())
        .collect()
}

/// The class of `ρ ∘ C_h̃`: eigenvalue row `i` becomes `(Π_j t_j[i]^{M_jk})_k`.
pub fn holonomy_action(p: &PlatycosmPresentation, h: &HolonomyElement, c: &TorusClass) -> TorusClass {
    let m = lattice_matrix(p, &h.lift);
    TorusClass::new(act_rows(&c.rows, &m)).expect("action preserves product one")
}

/// Permutation `w` with `h·c = w(c)` row by row, if one exists within `tol`.
fn fixing_permutation(p: &PlatycosmPresentation, h: &HolonomyElement, c: &TorusClass, tol: f64) -> Option<Vec<usize>> {
    let m = lattice_matrix(p, &h.lift);
    let moved = act_rows(&c.rows, &m);
    // moved[i] ≈ c.rows[w[i]]
    let (w, d) = lie_core::best_matching(&moved, &c.rows);
    (d <= tol * c.scale()).then_some(w)
}

pub fn fixed_distance(p: &PlatycosmPresentation, c: &TorusClass) -> f64 {
    p.holonomy_elements()
        .iter()
        .map(|h| holonomy_action(p, h, c).distance(c))
        .fold(0.0, f64::max)
}

pub fn is_fixed(p: &PlatycosmPresentation, c: &TorusClass, tol: f64) -> bool {
    fixed_distance(p, c) <= tol * c.scale()
}

/// One line of the fixed locus for SL(2): the coordinate `axis` is free and
/// the other two are the given signs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedLocusComponent {
    pub label: String,
    pub axis: usize,
    pub signs: [i32; 3],
    pub dim: usize,
    pub liftable: bool,
}

impl FixedLocusComponent {
    pub fn parametrize(&self, z: Complex64) -> TorusClass {
        let mut v = [c64(0.0, 0.0); 3];
        for k in 0..3 {
            v[k] = if k == self.axis { z } else { c64(self.signs[k] as f64, 0.0) };
        }
        TorusClass::sl2(v)
    }

    /// Distance from a class to this line (the free coordinate is read off the class).
    pub fn distance(&self, c: &TorusClass) -> f64 {
        c.rows.iter().map(|r| self.parametrize(r[self.axis]).distance(c)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedLocus {
    /// lines of Fix(K) in the image of the restriction map
    pub components: Vec<FixedLocusComponent>,
    /// lines of Fix(K) that carry no representation of the whole group
    pub obstructed: Vec<FixedLocusComponent>,
}

impl FixedLocus {
    pub fn distance(&self, c: &TorusClass) -> f64 {
        self.components.iter().map(|l| l.distance(c)).fold(f64::INFINITY, f64::min)
    }
}

// generic parameter used to decide liftability of a whole line
const PROBE: Complex64 = Complex64 { re: 1.37, im: 0.61 };

/// Fixed locus of the holonomy on `Char(T³, SL(2,C))` for G6.
///
/// The holonomy equations cut out twelve lines `{z_a free, z_b, z_c = ±1}`.
/// Each line is tested for liftability at a generic point; the liftable
/// ones are the components.
pub fn fixed_locus(p: &PlatycosmPresentation, ctx: &LieContext) -> Result<FixedLocus, CharError> {
    if p.name != "G6" || ctx.n != 2 {
        return Err(CharError::Unsupported(format!("closed form only for (G6, n=2), got ({}, n={})", p.name, ctx.n)));
    }
    let mut components = Vec::new();
    let mut obstructed = Vec::new();
    for axis in 0..3 {
        for s in [[-1, -1], [-1, 1], [1, -1], [1, 1]] {
            let mut signs = [0; 3];
            let others: Vec<usize> = (0..3).filter(|k| *k != axis).collect();
            signs[others[0]] = s[0];
            signs[others[1]] = s[1];
            let mut line = FixedLocusComponent { label: String::new(), axis, signs, dim: 1, liftable: false };
            let probe = line.parametrize(PROBE);
            if !is_fixed(p, &probe, CLASS_TOL) {
                return Err(CharError::NotFixed(fixed_distance(p, &probe)));
            }
            line.liftable = lift_representation(p, &probe).is_ok();
            let fmt = |k: usize| if k == axis { "z".to_string() } else { format!("{}", signs[k]) };
            line.label = format!("axis-{}:({},{},{})", axis + 1, fmt(0), fmt(1), fmt(2));
            if line.liftable {
                components.push(line);
            } else {
                obstructed.push(line);
            }
        }
    }
    Ok(FixedLocus { components, obstructed })
}

// Monomial matrix in symbolic form: e_i ↦ exp(exps[i]·x) e_{perm[i]}.
#[derive(Clone)]
struct Monomial {
    perm: Vec<usize>,
    exps: Vec<Vec<i64>>,
}

impl Monomial {
    fn identity(n: usize, vars: usize) -> Self {
        Monomial { perm: (0..n).collect(), exps: vec![vec![0; vars]; n] }
    }

    // self · other
    fn mul(&self, other: &Monomial) -> Monomial {
        let n = self.perm.len();
        let mut perm = vec![0; n];
        let mut exps = vec![vec![0; self.exps[0].len()]; n];
        for i in 0..n {
            let j = other.perm[i];
            perm[i] = self.perm[j];
            for v in 0..exps[i].len() {
                exps[i][v] = other.exps[i][v] + self.exps[j][v];
            }
        }
        Monomial { perm, exps }
    }

    fn inverse(&self) -> Monomial {
        let n = self.perm.len();
        let mut perm = vec![0; n];
        let mut exps = vec![vec![0; self.exps[0].len()]; n];
        for i in 0..n {
            perm[self.perm[i]] = i;
            exps[self.perm[i]] = self.exps[i].iter().map(|x| -x).collect();
        }
        Monomial { perm, exps }
    }
}

/// Lift a holonomy-fixed regular class to a representation of the whole group.
pub fn lift_representation(p: &PlatycosmPresentation, c: &TorusClass) -> Result<Representation, CharError> {
    let n = c.n;
    let els = p.holonomy_elements();
    for h in &els {
        if fixing_permutation(p, h, c, CLASS_TOL).is_none() {
            return Err(CharError::NotFixed(holonomy_action(p, h, c).distance(c)));
        }
    }
    if !c.is_regular() {
        return Err(CharError::CentralizerTooBig);
    }
    let diag: Vec<CMat> = (0..3).map(|k| linalg::from_diag(&c.coordinate(k))).collect();

    // linear stage: conjugators for every generator
    let m_gens = p.gen_count();
    let vars = m_gens * n;
    let mut gens_sym = Vec::with_capacity(m_gens);
    for (g, gen) in p.gens.iter().enumerate() {
        let m = p.lattice_action(&gen.rot);
        let target: Vec<CMat> = (0..3)
            .map(|k| {
                let mut t = CMat::identity(n, n);
                for j in 0..3 {
                    let e = m[j][k] as i32;
                    for i in 0..n {
                        t[(i, i)] *= c.rows[i][j].powi(e);
                    }
                }
                t
            })
            .collect();
        let perm = conjugator_pattern(&diag, &target)?;
        let mut exps = vec![vec![0; vars]; n];
        for (i, e) in exps.iter_mut().enumerate() {
            e[g * n + i] = 1;
        }
        gens_sym.push(Monomial { perm, exps });
    }

    let eval = |w: &[i32]| -> Monomial {
        let mut acc = Monomial::identity(n, vars);
        for &l in w {
            let g = &gens_sym[l.unsigned_abs() as usize - 1];
            acc = acc.mul(&if l > 0 { g.clone() } else { g.inverse() });
        }
        acc
    };

    // binomial stage
    let mut rows: Vec<Vec<i64>> = Vec::new();
    let mut rhs: Vec<Complex64> = Vec::new();
    for (k, w) in p.lattice_words.iter().enumerate() {
        let mono = eval(w);
        if mono.perm.iter().enumerate().any(|(i, j)| i != *j) {
            return Err(CharError::NoLift(format!("lattice word {k} permutes eigenlines")));
        }
        for i in 0..n {
            rows.push(mono.exps[i].clone());
            rhs.push(c.rows[i][k].ln());
        }
    }
    for r in p.relations() {
        let mono = eval(&r);
        if mono.perm.iter().enumerate().any(|(i, j)| i != *j) {
            return Err(CharError::NoLift(format!("relation {r:?} permutes eigenlines")));
        }
        for i in 0..n {
            rows.push(mono.exps[i].clone());
            rhs.push(c64(0.0, 0.0));
        }
    }
    for (g, sym) in gens_sym.iter().enumerate() {
        let mut row = vec![0; vars];
        for i in 0..n {
            row[g * n + i] = 1;
        }
        rows.push(row);
        let sign = WeylElement { perm: sym.perm.clone() }.sign();
        rhs.push(if sign > 0 { c64(0.0, 0.0) } else { c64(0.0, PI) });
    }
    let sol = solve_binomial(&rows, &rhs, vars, 1e-9, 1)
        .ok_or_else(|| CharError::NoLift("the relations are inconsistent on this class".into()))?;
    let zero = vec![c64(0.0, 0.0); sol.dim];
    let coeffs = sol.components[0].point(&zero);
    let images: Vec<CMat> = gens_sym
        .iter()
        .enumerate()
        .map(|(g, sym)| {
            let mut m = CMat::zeros(n, n);
            for i in 0..n {
                m[(sym.perm[i], i)] = coeffs[g * n + i];
            }
            m
        })
        .collect();
    let rep = Representation { ctx: LieContext::new(n).expect("n >= 2"), presentation: p.clone(), images };
    let res = relation_residual(&rep);
    if res > 1e-9 {
        return Err(CharError::NoLift(format!("relation residual {res:e}")));
    }
    Ok(rep)
}

// Solve S·D_k = T_k·S for all k; for regular diagonal D the solutions are
// monomial, S e_i ∝ e_{perm[i]}.
fn conjugator_pattern(d: &[CMat], t: &[CMat]) -> Result<Vec<usize>, CharError> {
    let n = d[0].nrows();
    let nn = n * n;
    let mut a = CMat::zeros(3 * nn, nn);
    for k in 0..3 {
        for col in 0..nn {
            let (r0, c0) = (col / n, col % n);
            // S = E_{r0,c0}: S D − T S has entry (r0,c0) = D[c0] − T[r0]
            let v = d[k][(c0, c0)] - t[k][(r0, r0)];
            a[(k * nn + r0 * n + c0, col)] = v;
        }
    }
    let (null, sv) = linalg::smallest_right_singular(&a, nn);
    let scale = linalg::fro(&a).max(1.0);
    let nullity = sv.iter().filter(|s| **s <= 1e-9 * scale).count();
    if nullity != n {
        return Err(CharError::NoLift(format!("conjugator space has dimension {nullity}, expected {n}")));
    }
    let mut perm = vec![usize::MAX; n];
    for i in 0..n {
        // column i of S is supported on the row j with T[j] = D[i]
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            let dist = (0..3).map(|k| (d[k][(i, i)] - t[k][(j, j)]).norm()).fold(0.0, f64::max);
            if dist < best.1 {
                best = (j, dist);
            }
        }
        perm[i] = best.0;
    }
    // every E_{perm(i), i} must lie in the null space
    for i in 0..n {
        let col = perm[i] * n + i;
        let mut e = CMat::zeros(nn, 1);
        e[(col, 0)] = c64(1.0, 0.0);
        let proj = &null * (null.adjoint() * &e);
        if linalg::fro(&(proj - e)) > 1e-8 {
            return Err(CharError::NoLift("conjugator is not monomial".into()));
        }
    }
    let mut seen = vec![false; n];
    for &j in &perm {
        if seen[j] {
            return Err(CharError::NoLift("conjugator pattern is not a permutation".into()));
        }
        seen[j] = true;
    }
    Ok(perm)
}

/// Complex dimension of H¹(π; ad ρ): cocycles of the linearized relations
/// modulo coboundaries.
pub fn deformation_dimension(rep: &Representation) -> usize {
    let n = rep.n();
    let basis = sl_basis(n);
    let m = rep.images.len();
    let unknowns = m * basis.len();
    let rels = rep.presentation.relations();
    let mut jac = CMat::zeros(rels.len() * n * n, unknowns);
    for (g, _) in rep.images.iter().enumerate() {
        for (b, xb) in basis.iter().enumerate() {
            let col = g * basis.len() + b;
            for (ri, r) in rels.iter().enumerate() {
                let d = relation_derivative(rep, r, g + 1, xb);
                for e in 0..n * n {
                    jac[(ri * n * n + e, col)] = d[(e / n, e % n)];
                }
            }
        }
    }
    let z1 = unknowns - numeric_rank(&jac);
    let mut cob = CMat::zeros(m * n * n, basis.len());
    for (b, x) in basis.iter().enumerate() {
        for (g, img) in rep.images.iter().enumerate() {
            let gi = linalg::inverse(img).expect("unit determinant");
            let u = x - img * x * gi;
            for e in 0..n * n {
                cob[(g * n * n + e, b)] = u[(e / n, e % n)];
            }
        }
    }
    z1 - numeric_rank(&cob)
}

fn numeric_rank(a: &CMat) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|s| **s > 1e-8 * top.max(1e-300)).count()
}

fn sl_basis(n: usize) -> Vec<CMat> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut e = CMat::zeros(n, n);
                e[(i, j)] = c64(1.0, 0.0);
                out.push(e);
            }
        }
    }
    for i in 0..n - 1 {
        let mut h = CMat::zeros(n, n);
        h[(i, i)] = c64(1.0, 0.0);
        h[(i + 1, i + 1)] = c64(-1.0, 0.0);
        out.push(h);
    }
    out
}

// d/dt ρ_t(r) at t = 0 for ρ_t(g) = exp(t·x)·ρ(g) on generator `gen`.
fn relation_derivative(rep: &Representation, r: &[i32], gen: usize, x: &CMat) -> CMat {
    let n = rep.n();
    let mut total = CMat::zeros(n, n);
    for (j, &l) in r.iter().enumerate() {
        if l.unsigned_abs() as usize != gen {
            continue;
        }
        let before = rep.eval(&r[..j]);
        let after = rep.eval(&r[j + 1..]);
        let img = &rep.images[gen - 1];
        let delta = if l > 0 { x * img } else { -(linalg::inverse(img).unwrap() * x) };
        total += before * delta * after;
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidClass {
    pub label: String,
    pub trivial: bool,
    pub lattice_signs: [i32; 3],
    pub relation_residual: f64,
    pub deformation_dim: usize,
    pub rep: Representation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidReport {
    /// isolated classes, trivial first
    pub rigid: Vec<RigidClass>,
    /// classes with central lattice image that deform (they sit on the lines)
    pub non_rigid: Vec<RigidClass>,
}

impl RigidReport {
    pub fn nontrivial_count(&self) -> usize {
        self.rigid.iter().filter(|c| !c.trivial).count()
    }
}

/// Enumerate representations with central lattice image by solving the
/// trace equations, and sort them by the dimension of their deformation space.
///
/// With `ρ(e_k) = ε_k I`, a generator with `g² = e` has `ρ(g) = ±I` when
/// `ε = 1` and `ρ(g) ~ diag(i, −i)` when `ε = −1`. For two non-scalar images
/// the pair is fixed up to conjugation by `τ = tr ρ(αβ)`, and
/// `(ρ(α)ρ(β))² = ε I` forces `τ = 0` for `ε = −1` and `τ = ±2` for `ε = 1`.
pub fn rigid_components(p: &PlatycosmPresentation, ctx: &LieContext) -> Result<RigidReport, CharError> {
    if p.name != "G6" || ctx.n != 2 {
        return Err(CharError::Unsupported("rigid search is implemented for (G6, n=2)".into()));
    }
    let i = c64(0.0, 1.0);
    let scalar = |s: f64| CMat::identity(2, 2) * c64(s, 0.0);
    let quarter = linalg::from_diag(&[i, -i]);
    let with_trace = |tau: Complex64| {
        // β traceless, det 1, tr(diag(i,−i)·β) = τ
        let x = tau / (2.0 * i);
        linalg::from_rows(2, &[x, c64(1.0, 0.0), -(c64(1.0, 0.0) + x * x), -x])
    };
    let mut found: Vec<(CMat, CMat)> = Vec::new();
    for e1 in [1, -1] {
        for e2 in [1, -1] {
            for e3 in [1, -1] {
                let alphas: Vec<CMat> = if e1 == 1 { vec![scalar(1.0), scalar(-1.0)] } else { vec![quarter.clone()] };
                for a in &alphas {
                    let betas: Vec<CMat> = if e2 == 1 {
                        vec![scalar(1.0), scalar(-1.0)]
                    } else if e1 == 1 {
                        vec![quarter.clone()]
                    } else {
                        let taus: Vec<f64> = if e3 == -1 { vec![0.0] } else { vec![2.0, -2.0] };
                        taus.into_iter().map(|t| with_trace(c64(t, 0.0))).collect()
                    };
                    for b in betas {
                        found.push((a.clone(), b));
                    }
                }
            }
        }
    }
    let mut rigid = Vec::new();
    let mut non_rigid = Vec::new();
    for (a, b) in found {
        let rep = Representation { ctx: *ctx, presentation: p.clone(), images: vec![a, b] };
        let res = relation_residual(&rep);
        if res > 1e-12 {
            continue;
        }
        let lat = rep.lattice_images();
        let signs = [0, 1, 2].map(|k| if lat[k][(0, 0)].re > 0.0 { 1 } else { -1 });
        let central = lat.iter().all(|m| linalg::fro(&(m - CMat::identity(2, 2) * m[(0, 0)])) < 1e-12);
        if !central {
            continue;
        }
        let duplicate = rigid.iter().chain(non_rigid.iter()).any(|c: &RigidClass| same_sl2_class(&c.rep, &rep));
        if duplicate {
            continue;
        }
        let dim = deformation_dimension(&rep);
        let trivial = rep.images.iter().all(|m| linalg::fro(&(m - CMat::identity(2, 2))) < 1e-12);
        let label = format!(
            "rho(a)~{}, rho(b)~{}",
            describe(&rep.images[0]),
            describe(&rep.images[1])
        );
        let class = RigidClass { label, trivial, lattice_signs: signs, relation_residual: res, deformation_dim: dim, rep };
        if dim == 0 {
            rigid.push(class);
        } else {
            non_rigid.push(class);
        }
    }
    rigid.sort_by_key(|c| !c.trivial);
    Ok(RigidReport { rigid, non_rigid })
}

fn describe(m: &CMat) -> String {
    if linalg::fro(&(m - CMat::identity(2, 2))) < 1e-12 {
        "I".into()
    } else if linalg::fro(&(m + CMat::identity(2, 2))) < 1e-12 {
        "-I".into()
    } else {
        format!("order-4 (tr {:.0})", linalg::trace(m).re)
    }
}

// Same conjugacy class, tested through traces of short words (SL(2) with two generators).
fn same_sl2_class(a: &Representation, b: &Representation) -> bool {
    let words: [&[i32]; 3] = [&[1], &[2], &[1, 2]];
    words.iter().all(|w| (linalg::trace(&a.eval(w)) - linalg::trace(&b.eval(w))).norm() < 1e-9)
        && a.images.iter().zip(&b.images).all(|(x, y)| {
            let sx = linalg::fro(&(x - CMat::identity(2, 2) * x[(0, 0)])) < 1e-12;
            let sy = linalg::fro(&(y - CMat::identity(2, 2) * y[(0, 0)])) < 1e-12;
            sx == sy && (!sx || (x[(0, 0)] - y[(0, 0)]).norm() < 1e-12)
        })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConjectureComponent {
    pub label: String,
    pub dim: usize,
    #[serde(skip)]
    pub torus: Option<TorusComponent>,
    pub sample_points: Vec<TorusClass>,
    pub samples_verified: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub n: usize,
    pub systems_solved: usize,
    pub components: Vec<ConjectureComponent>,
    pub dims: Vec<usize>,
}

fn involutions(n: usize) -> Vec<Vec<usize>> {
    lie_core::permutations(n)
        .into_iter()
        .filter(|p| p.iter().enumerate().all(|(i, &j)| p[j] == i) && p.iter().enumerate().any(|(i, &j)| i != j))
        .collect()
}

// Log-coordinate equations of the twisted piece P_h(w): variables x_k[i] at index k·n + i.
fn piece_equations(p: &PlatycosmPresentation, h: &HolonomyElement, w: &[usize], n: usize) -> (Vec<Vec<i64>>, Vec<Complex64>) {
    let vars = 3 * n;
    let idx = |k: usize, i: usize| k * n + i;
    let m = lattice_matrix(p, &h.lift);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    // moved row i equals row w(i)
    for i in 0..n {
        for k in 0..3 {
            let mut r = vec![0i64; vars];
            for j in 0..3 {
                r[idx(j, i)] += m[j][k];
            }
            r[idx(k, w[i])] -= 1;
            rows.push(r);
            rhs.push(c64(0.0, 0.0));
        }
    }
    // h̃² is the lattice element with coordinates `sq`
    let sq_word: Word = h.lift.iter().chain(h.lift.iter()).copied().collect();
    let sq = p.eval(&sq_word).expect("valid word");
    let sq = p.integral_lattice_coords(&sq.trans).expect("square of an involution lift is a translation");
    let mut fixed_free = true;
    let mut det_row = vec![0i64; vars];
    for a in 0..n {
        let b = w[a];
        if a == b {
            fixed_free = false;
            continue;
        }
        if a < b {
            let mut r = vec![0i64; vars];
            for k in 0..3 {
                r[idx(k, a)] += sq[k];
                r[idx(k, b)] -= sq[k];
                det_row[idx(k, a)] += sq[k];
            }
            rows.push(r);
            rhs.push(c64(0.0, 0.0));
        }
    }
    if fixed_free {
        let sign = WeylElement { perm: w.to_vec() }.sign();
        rows.push(det_row);
        rhs.push(if sign > 0 { c64(0.0, 0.0) } else { c64(0.0, PI) });
    }
    (rows, rhs)
}

/// Components of `⋃_{h ≠ h'} P_h ∩ P_h'` where `P_h` is the set of classes
/// fixed by `h` through a nontrivial involution of the eigenlines and
/// compatible with lifting `h̃`. Components are deduplicated modulo Σ_n and
/// components contained in larger ones are dropped.
pub fn conjecture_rhs<R: Rng>(p: &PlatycosmPresentation, n: usize, samples_per_component: usize, rng: &mut R) -> Result<ConjectureReport, CharError> {
    if p.name != "G6" || !(2..=3).contains(&n) {
        return Err(CharError::Unsupported("implemented for G6 with n in {2, 3}".into()));
    }
    let els = p.holonomy_elements();
    let nontrivial: Vec<&HolonomyElement> = els.iter().skip(1).collect();
    let vars = 3 * n;
    let mut product_one = Vec::new();
    for k in 0..3 {
        let mut r = vec![0i64; vars];
        for i in 0..n {
            r[k * n + i] = 1;
        }
        product_one.push(r);
    }
    let mut raw: Vec<(String, TorusComponent, usize)> = Vec::new();
    let mut systems = 0;
    let invs = involutions(n);
    for a in 0..nontrivial.len() {
        for b in a + 1..nontrivial.len() {
            for wa in &invs {
                for wb in &invs {
                    let (mut rows, mut rhs) = (product_one.clone(), vec![c64(0.0, 0.0); 3]);
                    for (h, w) in [(nontrivial[a], wa), (nontrivial[b], wb)] {
                        let (r, c) = piece_equations(p, h, w, n);
                        rows.extend(r);
                        rhs.extend(c);
                    }
                    systems += 1;
                    if let Some(sol) = solve_binomial(&rows, &rhs, vars, 1e-12, 256) {
                        for comp in sol.components {
                            let label = format!("h{}∩h{} w={:?},{:?}", a + 1, b + 1, wa, wb);
                            raw.push((label, comp, sol.dim));
                        }
                    }
                }
            }
        }
    }
    // deduplicate modulo Σ_n, keep maximal components
    let perms = lie_core::permutations(n);
    let permute = |t: &[Complex64], s: &[usize]| -> Vec<Complex64> {
        let mut out = t.to_vec();
        for k in 0..3 {
            for i in 0..n {
                out[k * n + s[i]] = t[k * n + i];
            }
        }
        out
    };
    let probe_points = |c: &TorusComponent| -> Vec<Vec<Complex64>> {
        (0..3)
            .map(|j| {
                let s: Vec<Complex64> = (0..c.dim()).map(|d| c64(0.31 + 0.17 * (j + d) as f64, 0.23 - 0.11 * (j * d) as f64)).collect();
                c.point(&s)
            })
            .collect()
    };
    // `inner ⊆ σ(outer)` for some σ, tested on generic probe points of `inner`
    let contained = |inner: &TorusComponent, outer: &TorusComponent| {
        perms.iter().any(|s| probe_points(inner).iter().all(|pt| outer.contains(&permute(pt, s), 1e-9)))
    };
    raw.sort_by_key(|x| std::cmp::Reverse(x.2));
    let mut kept: Vec<(String, TorusComponent, usize)> = Vec::new();
    for (label, comp, dim) in raw {
        if kept.iter().any(|(_, k, kd)| *kd >= dim && contained(&comp, k)) {
            continue;
        }
        kept.push((label, comp, dim));
    }
    let mut components = Vec::new();
    for (label, comp, dim) in kept {
        let mut samples = Vec::new();
        let mut ok = true;
        for _ in 0..samples_per_component {
            let s: Vec<Complex64> = (0..dim).map(|_| c64(rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0))).collect();
            let t = comp.point(&s);
            let rows: Vec<Vec<Complex64>> = (0..n).map(|i| (0..3).map(|k| t[k * n + i]).collect()).collect();
            match TorusClass::new(rows) {
                Ok(c) => {
                    ok &= is_fixed(p, &c, 1e-9) && weyl_canonical(&c.rows) == c.rows;
                    samples.push(c);
                }
                Err(_) => ok = false,
            }
        }
        components.push(ConjectureComponent { label, dim, torus: Some(comp), sample_points: samples, samples_verified: ok });
    }
    let dims = components.iter().map(|c| c.dim).collect();
    Ok(ConjectureReport { n, systems_solved: systems, components, dims })
}

/// Match conjecture components against the fixed-locus lines: returns, for
/// each conjecture component, the index of the line containing all its
/// samples (or `None`), and whether every line is hit exactly once.
pub fn match_conjecture(report: &ConjectureReport, locus: &FixedLocus) -> (Vec<Option<usize>>, bool) {
    let matches: Vec<Option<usize>> = report
        .components
        .iter()
        .map(|c| {
            locus.components.iter().position(|line| {
                c.dim == line.dim && !c.sample_points.is_empty() && c.sample_points.iter().all(|s| line.distance(s) <= 1e-9)
            })
        })
        .collect();
    let bijective = report.components.len() == locus.components.len()
        && (0..locus.components.len()).all(|l| matches.iter().filter(|m| **m == Some(l)).count() == 1);
    (matches, bijective)
}

/// Sampling report for the fixed locus: random candidates whose coordinates
/// are random units or random signs are tested for holonomy-fixedness and
/// liftability; the surviving classes (restricted back from a randomly
/// conjugated lift) are measured against the lines.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedSampleReport {
    pub candidates: usize,
    pub fixed: usize,
    pub lifted: usize,
    pub max_line_distance: f64,
    pub per_line: Vec<usize>,
}

pub fn sample_fixed_classes<R: Rng>(p: &PlatycosmPresentation, locus: &FixedLocus, target: usize, rng: &mut R) -> FixedSampleReport {
    let mut report = FixedSampleReport { candidates: 0, fixed: 0, lifted: 0, max_line_distance: 0.0, per_line: vec![0; locus.components.len()] };
    while report.lifted < target {
        report.candidates += 1;
        let coord = |rng: &mut R| {
            if rng.random_bool(0.5) {
                let r: f64 = rng.random_range(-2.0f64..2.0).exp();
                let th: f64 = rng.random_range(0.0..2.0 * PI);
                Complex64::from_polar(r, th)
            } else if rng.random_bool(0.5) {
                c64(1.0, 0.0)
            } else {
                c64(-1.0, 0.0)
            }
        };
        let z = [coord(rng), coord(rng), coord(rng)];
        let c = TorusClass::sl2(z);
        if !c.is_regular() || !is_fixed(p, &c, CLASS_TOL) {
            continue;
        }
        report.fixed += 1;
        let Ok(rep) = lift_representation(p, &c) else { continue };
        let g = crate::rng::random_invertible(rng, 2);
        let g = linalg::normalize_det(&g);
        let Ok(back) = restrict_to_lattice(&rep.conjugate(&g)) else { continue };
        report.lifted += 1;
        let (best, d) = locus
            .components
            .iter()
            .enumerate()
            .map(|(i, l)| (i, l.distance(&back)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        report.per_line[best] += 1;
        report.max_line_distance = report.max_line_distance.max(d);
    }
    report
}

/// Words `h̃ e_k h̃⁻¹` for a lift, reduced.
pub fn conjugated_lattice_words(p: &PlatycosmPresentation, lift: &[i32]) -> Vec<Word> {
    let inv = crate::platycosm::invert_word(lift);
    p.lattice_words
        .iter()
        .map(|w| free_reduce(&lift.iter().chain(w.iter()).chain(inv.iter()).copied().collect::<Vec<_>>()))
        .collect()
}
