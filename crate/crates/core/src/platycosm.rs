//! The six orientable compact flat 3-manifolds as affine isometry groups.
//!
//! Coordinates are lattice coordinates: the translation lattice of G1, G2,
//! G4 and G6 is Z³ with the Euclidean Gram matrix, while G3 and G5 use the
//! hexagonal lattice with basis a₁ = (1,0,0), a₂ = (−1/2, √3/2, 0),
//! a₃ = (0,0,1), whose Gram matrix is rational. All group arithmetic is
//! exact over Q.

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use thiserror::Error;

pub type Q = Ratio<i64>;
pub type IMat3 = [[i64; 3]; 3];
pub type QVec3 = [Q; 3];

/// A word in the generators: letter `k > 0` is generator `k−1`, `−k` its
/// inverse. The word `[a, b, c]` denotes the product `a·b·c`, i.e. the map
/// `x ↦ a(b(c(x)))`.
pub type Word = Vec<i32>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlatycosmError {
    #[error("unknown platycosm name {0:?} (expected G1..G6)")]
    UnknownName(String),
    #[error("grid resolution {n} is incompatible with generator {generator}: {reason}")]
    IncompatibleResolution { n: usize, generator: usize, reason: String },
    #[error("word refers to missing generator {0}")]
    BadWord(i32),
}

pub fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

pub fn qi(n: i64) -> Q {
    Ratio::from_integer(n)
}

const ID3: IMat3 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

pub fn mat_mul(a: &IMat3, b: &IMat3) -> IMat3 {
    let mut c = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mat_det(a: &IMat3) -> i64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Inverse of a unimodular integer matrix.
pub fn mat_inv(a: &IMat3) -> IMat3 {
    let d = mat_det(a);
    assert!(d == 1 || d == -1, "matrix is not unimodular");
    let mut inv = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) * d;
        }
    }
    inv
}

pub fn transpose(a: &IMat3) -> IMat3 {
    let mut t = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn mat_vec(a: &IMat3, v: &QVec3) -> QVec3 {
    let mut out = [qi(0); 3];
    for i in 0..3 {
        out[i] = (0..3).map(|k| v[k] * a[i][k]).sum();
    }
    out
}

fn vadd(a: &QVec3, b: &QVec3) -> QVec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `x ↦ rot·x + trans` in lattice coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineIsometry {
    pub rot: IMat3,
    #[serde(with = "qvec_serde")]
    pub trans: QVec3,
}

impl AffineIsometry {
    pub fn identity() -> Self {
        AffineIsometry { rot: ID3, trans: [qi(0); 3] }
    }

    pub fn translation(t: QVec3) -> Self {
        AffineIsometry { rot: ID3, trans: t }
    }

    pub fn new(rot: IMat3, trans: QVec3) -> Self {
        AffineIsometry { rot, trans }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineIsometry) -> AffineIsometry {
        AffineIsometry {
            rot: mat_mul(&self.rot, &other.rot),
            trans: vadd(&mat_vec(&self.rot, &other.trans), &self.trans),
        }
    }

    pub fn inverse(&self) -> AffineIsometry {
        let ri = mat_inv(&self.rot);
        let t = mat_vec(&ri, &self.trans);
        AffineIsometry { rot: ri, trans: [-t[0], -t[1], -t[2]] }
    }

    pub fn apply(&self, x: &QVec3) -> QVec3 {
        vadd(&mat_vec(&self.rot, x), &self.trans)
    }

    pub fn is_translation(&self) -> bool {
        self.rot == ID3
    }

    pub fn is_identity(&self) -> bool {
        self.rot == ID3 && self.trans.iter().all(|t| *t == qi(0))
    }

    /// Whether the map has a fixed point in R³.
    pub fn has_fixed_point(&self) -> bool {
        let mut m = [[qi(0); 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = qi(self.rot[i][j] - if i == j { 1 } else { 0 });
            }
            m[i][3] = -self.trans[i];
        }
        solvable(m)
    }
}

// Consistency of a 3×3 rational system given as an augmented matrix.
fn solvable(mut m: [[Q; 4]; 3]) -> bool {
    let mut row = 0;
    for col in 0..3 {
        let Some(p) = (row..3).find(|&r| m[r][col] != qi(0)) else { continue };
        m.swap(row, p);
        let piv = m[row][col];
        for c in 0..4 {
            m[row][c] /= piv;
        }
        for r in 0..3 {
            if r != row && m[r][col] != qi(0) {
                let f = m[r][col];
                for c in 0..4 {
                    let v = m[row][c];
                    m[r][c] -= f * v;
                }
            }
        }
        row += 1;
    }
    (row..3).all(|r| m[r][3] == qi(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatycosmPresentation {
    pub name: String,
    /// Metric in lattice coordinates.
    #[serde(with = "qmat_serde")]
    pub gram: [[Q; 3]; 3],
    /// Translation lattice basis (rows) in the working coordinates.
    #[serde(with = "qmat_serde")]
    pub lattice: [[Q; 3]; 3],
    pub gens: Vec<AffineIsometry>,
    /// Words evaluating to the three lattice basis translations.
    pub lattice_words: Vec<Word>,
    pub holonomy_order: usize,
}

fn rot_z2() -> IMat3 {
    [[-1, 0, 0], [0, -1, 0], [0, 0, 1]]
}

pub fn unit_translations() -> Vec<AffineIsometry> {
    (0..3)
        .map(|i| {
            let mut t = [qi(0); 3];
            t[i] = qi(1);
            AffineIsometry::translation(t)
        })
        .collect()
}

pub fn identity_mat() -> IMat3 {
    [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
}

fn euclid() -> [[Q; 3]; 3] {
    let mut g = [[qi(0); 3]; 3];
    for (i, row) in g.iter_mut().enumerate() {
        row[i] = qi(1);
    }
    g
}

fn hexagonal() -> [[Q; 3]; 3] {
    [[qi(1), q(-1, 2), qi(0)], [q(-1, 2), qi(1), qi(0)], [qi(0), qi(0), qi(1)]]
}

// screw motion about the z axis plus the two in-plane unit translations
fn screw(name: &str, rot: IMat3, order: i64, gram: [[Q; 3]; 3]) -> PlatycosmPresentation {
    let t = unit_translations();
    let a = AffineIsometry::new(rot, [qi(0), qi(0), q(1, order)]);
    PlatycosmPresentation {
        name: name.into(),
        gram,
        lattice: euclid(),
        gens: vec![a, t[0].clone(), t[1].clone()],
        lattice_words: vec![vec![2], vec![3], vec![1; order as usize]],
        holonomy_order: order as usize,
    }
}

/// The G6 generators α = (A, (1/2,0,0)) and β = (B, (0,1/2,1/2)).
pub fn hantzsche_wendt() -> PlatycosmPresentation {
    let a = AffineIsometry::new([[1, 0, 0], [0, -1, 0], [0, 0, -1]], [q(1, 2), qi(0), qi(0)]);
    let b = AffineIsometry::new([[-1, 0, 0], [0, 1, 0], [0, 0, -1]], [qi(0), q(1, 2), q(1, 2)]);
    PlatycosmPresentation {
        name: "G6".into(),
        gram: euclid(),
        lattice: euclid(),
        gens: vec![a, b],
        // e₁ = α², e₂ = β², e₃ = (αβ)⁻²
        lattice_words: vec![vec![1, 1], vec![2, 2], vec![-2, -1, -2, -1]],
        holonomy_order: 4,
    }
}

pub fn presentation(name: &str) -> Result<PlatycosmPresentation, PlatycosmError> {
    let upper = name.to_ascii_uppercase();
    match upper.as_str() {
        "G1" => Ok(PlatycosmPresentation {
            name: "G1".into(),
            gram: euclid(),
            lattice: euclid(),
            gens: unit_translations(),
            lattice_words: vec![vec![1], vec![2], vec![3]],
            holonomy_order: 1,
        }),
        "G2" => Ok(screw("G2", rot_z2(), 2, euclid())),
        "G3" => Ok(screw("G3", [[0, -1, 0], [1, -1, 0], [0, 0, 1]], 3, hexagonal())),
        "G4" => Ok(screw("G4", [[0, -1, 0], [1, 0, 0], [0, 0, 1]], 4, euclid())),
        "G5" => Ok(screw("G5", [[1, -1, 0], [1, 0, 0], [0, 0, 1]], 6, hexagonal())),
        "G6" => Ok(hantzsche_wendt()),
        _ => Err(PlatycosmError::UnknownName(name.into())),
    }
}

/// G6 written over the torus R³/(2Z⊕Z⊕Z) with the generators
/// α'(x) = (−x₁+3/4, −x₂, x₃+1/2) and β'(x) = (−x₁+1/4, x₂+1/4, −x₃).
///
/// The translations of the generated group form the lattice
/// Z(1,0,0) ⊕ Z(0,1/2,0) ⊕ Z(0,0,1), which is what `lattice` records.
pub fn hantzsche_wendt_d8() -> PlatycosmPresentation {
    let a = AffineIsometry::new(rot_z2(), [q(3, 4), qi(0), q(1, 2)]);
    let b = AffineIsometry::new([[-1, 0, 0], [0, 1, 0], [0, 0, -1]], [q(1, 4), q(1, 4), qi(0)]);
    PlatycosmPresentation {
        name: "G6-D8".into(),
        gram: euclid(),
        lattice: [[qi(1), qi(0), qi(0)], [qi(0), q(1, 2), qi(0)], [qi(0), qi(0), qi(1)]],
        gens: vec![a, b],
        lattice_words: vec![vec![1, 2, 1, 2], vec![2, 2], vec![1, 1]],
        holonomy_order: 4,
    }
}

pub const NAMES: [&str; 6] = ["G1", "G2", "G3", "G4", "G5", "G6"];

/// A holonomy element together with the word chosen as its lift.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolonomyElement {
    pub rot: IMat3,
    pub lift: Word,
}

impl PlatycosmPresentation {
    pub fn gen_count(&self) -> usize {
        self.gens.len()
    }

    pub fn letter(&self, l: i32) -> Result<AffineIsometry, PlatycosmError> {
        let idx = l.unsigned_abs() as usize;
        if l == 0 || idx > self.gens.len() {
            return Err(PlatycosmError::BadWord(l));
        }
        let g = &self.gens[idx - 1];
        Ok(if l > 0 { g.clone() } else { g.inverse() })
    }

    pub fn eval(&self, word: &[i32]) -> Result<AffineIsometry, PlatycosmError> {
        let mut acc = AffineIsometry::identity();
        for &l in word {
            acc = acc.compose(&self.letter(l)?);
        }
        Ok(acc)
    }

    /// Holonomy group elements, identity first, each with a shortest lift.
    pub fn holonomy_elements(&self) -> Vec<HolonomyElement> {
        let mut out = vec![HolonomyElement { rot: ID3, lift: vec![] }];
        let mut queue = VecDeque::from([0usize]);
        let letters: Vec<i32> = (1..=self.gens.len() as i32).flat_map(|k| [k, -k]).collect();
        while let Some(i) = queue.pop_front() {
            for &l in &letters {
                let g = self.letter(l).unwrap();
                let rot = mat_mul(&out[i].rot, &g.rot);
                if out.iter().all(|e| e.rot != rot) {
                    let mut lift = out[i].lift.clone();
                    lift.push(l);
                    out.push(HolonomyElement { rot, lift });
                    queue.push_back(out.len() - 1);
                }
            }
        }
        out
    }

    /// Cayley table of the holonomy group in the order of
    /// [`Self::holonomy_elements`].
    pub fn holonomy_table(&self) -> Vec<Vec<usize>> {
        let els = self.holonomy_elements();
        els.iter()
            .map(|a| {
                els.iter()
                    .map(|b| {
                        let r = mat_mul(&a.rot, &b.rot);
                        els.iter().position(|e| e.rot == r).expect("closed under products")
                    })
                    .collect()
            })
            .collect()
    }

    pub fn holonomy_index(&self, rot: &IMat3) -> Option<usize> {
        self.holonomy_elements().iter().position(|e| &e.rot == rot)
    }

    /// Lattice coordinates of a translation vector, if it lies in the lattice span over Q.
    pub fn lattice_coords(&self, v: &QVec3) -> [Q; 3] {
        // solve v = Σ c_k L_k, i.e. Lᵀ c = v
        let l = &self.lattice;
        let m: [[Q; 3]; 3] = [[l[0][0], l[1][0], l[2][0]], [l[0][1], l[1][1], l[2][1]], [l[0][2], l[1][2], l[2][2]]];
        solve3(m, *v)
    }

    pub fn integral_lattice_coords(&self, v: &QVec3) -> Option<[i64; 3]> {
        let c = self.lattice_coords(v);
        if c.iter().all(|x| x.is_integer()) {
            Some([c[0].to_integer(), c[1].to_integer(), c[2].to_integer()])
        } else {
            None
        }
    }

    /// Integer matrix `M` with `rot·L_k = Σ_j M[j][k] L_j`.
    pub fn lattice_action(&self, rot: &IMat3) -> IMat3 {
        let mut m = [[0; 3]; 3];
        for k in 0..3 {
            let image = mat_vec(rot, &self.lattice[k]);
            let c = self.integral_lattice_coords(&image).expect("holonomy preserves the lattice");
            for j in 0..3 {
                m[j][k] = c[j];
            }
        }
        m
    }

    /// A word equal to the lattice translation with integer coordinates `c`.
    pub fn lattice_word(&self, c: &[i64; 3]) -> Word {
        let mut w = Vec::new();
        for (k, &ck) in c.iter().enumerate() {
            let base = &self.lattice_words[k];
            if ck >= 0 {
                for _ in 0..ck {
                    w.extend_from_slice(base);
                }
            } else {
                let inv = invert_word(base);
                for _ in 0..(-ck) {
                    w.extend_from_slice(&inv);
                }
            }
        }
        w
    }

    /// Defining relations, each a word equal to the identity. They are the
    /// extension relations `s_a s_b = λ(a,b) s_{ab}` over the holonomy
    /// group, `g = λ_g s_{h(g)}` for every generator, the conjugation action
    /// of each generator on the lattice and the lattice commutators.
    pub fn relations(&self) -> Vec<Word> {
        let els = self.holonomy_elements();
        let table = self.holonomy_table();
        let mut rels = Vec::new();
        let lat = |w: &Word| -> Word {
            let m = self.eval(w).unwrap();
            let c = self.integral_lattice_coords(&m.trans).expect("lattice element");
            self.lattice_word(&c)
        };
        for i in 0..3 {
            for j in i + 1..3 {
                let (a, b) = (&self.lattice_words[i], &self.lattice_words[j]);
                rels.push(concat(&[a, b, &invert_word(a), &invert_word(b)]));
            }
        }
        for g in 1..=self.gens.len() as i32 {
            for k in 0..3 {
                let conj = concat(&[&vec![g], &self.lattice_words[k], &vec![-g]]);
                let target = lat(&conj);
                rels.push(concat(&[&conj, &invert_word(&target)]));
            }
            let h = self.holonomy_index(&self.gens[(g - 1) as usize].rot).unwrap();
            let s = &els[h].lift;
            if s != &vec![g] {
                let diff = concat(&[&vec![g], &invert_word(s)]);
                let lam = lat(&diff);
                rels.push(concat(&[&diff, &invert_word(&lam)]));
            }
        }
        for a in 0..els.len() {
            for b in 0..els.len() {
                let ab = table[a][b];
                let prod = concat(&[&els[a].lift, &els[b].lift, &invert_word(&els[ab].lift)]);
                let lam = lat(&prod);
                let r = concat(&[&prod, &invert_word(&lam)]);
                if !r.is_empty() {
                    rels.push(r);
                }
            }
        }
        rels.retain(|r| !free_reduce(r).is_empty());
        rels
    }

    /// Covector monodromy: the matrix acting on 1-form components, `R⁻ᵀ`,
    /// for every holonomy element.
    pub fn holonomy_action_on_forms(&self) -> Vec<IMat3> {
        self.holonomy_elements().iter().map(|e| transpose(&mat_inv(&e.rot))).collect()
    }

    pub fn is_unit_cube_torus(&self) -> bool {
        self.lattice == euclid() && self.gram == euclid()
    }
}

pub fn invert_word(w: &[i32]) -> Word {
    w.iter().rev().map(|l| -l).collect()
}

pub fn concat(parts: &[&Word]) -> Word {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn free_reduce(w: &[i32]) -> Word {
    let mut out: Vec<i32> = Vec::new();
    for &l in w {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

fn solve3(mut m: [[Q; 3]; 3], mut v: [Q; 3]) -> [Q; 3] {
    for col in 0..3 {
        let p = (col..3).find(|&r| m[r][col] != qi(0)).expect("singular lattice basis");
        m.swap(col, p);
        v.swap(col, p);
        for r in 0..3 {
            if r != col && m[r][col] != qi(0) {
                let f = m[r][col] / m[col][col];
                for c in 0..3 {
                    let x = m[col][c];
                    m[r][c] -= f * x;
                }
                let x = v[col];
                v[r] -= f * x;
            }
        }
    }
    [v[0] / m[0][0], v[1] / m[1][1], v[2] / m[2][2]]
}

/// Applies the product of the word's letters to `x`.
pub fn deck_action(p: &PlatycosmPresentation, word: &[i32], x: &QVec3) -> Result<QVec3, PlatycosmError> {
    Ok(p.eval(word)?.apply(x))
}

pub fn holonomy_action_on_forms(p: &PlatycosmPresentation) -> Vec<IMat3> {
    p.holonomy_action_on_forms()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub group_order_check: bool,
    pub holonomy_order_found: usize,
    pub lattice_span: bool,
    pub lattice_words_ok: bool,
    pub torsion_free: bool,
    pub torsion_witness: Option<Word>,
    pub holonomy_quotient: bool,
    pub quotient_structure: String,
    pub cayley_table: Vec<Vec<usize>>,
    pub relations_ok: bool,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.group_order_check
            && self.lattice_span
            && self.lattice_words_ok
            && self.torsion_free
            && self.holonomy_quotient
            && self.relations_ok
    }
}

/// Distinct group elements reachable by words of length ≤ `len`, each with
/// a shortest word.
pub fn elements_up_to(p: &PlatycosmPresentation, len: usize) -> Vec<(AffineIsometry, Word)> {
    let letters: Vec<i32> = (1..=p.gens.len() as i32).flat_map(|k| [k, -k]).collect();
    let mut seen: HashMap<AffineIsometry, Word> = HashMap::new();
    seen.insert(AffineIsometry::identity(), vec![]);
    let mut frontier = vec![(AffineIsometry::identity(), Word::new())];
    for _ in 0..len {
        let mut next = Vec::new();
        for (g, w) in &frontier {
            for &l in &letters {
                let h = g.compose(&p.letter(l).unwrap());
                if !seen.contains_key(&h) {
                    let mut w2 = w.clone();
                    w2.push(l);
                    seen.insert(h.clone(), w2.clone());
                    next.push((h, w2));
                }
            }
        }
        frontier = next;
    }
    let mut all: Vec<(AffineIsometry, Word)> = seen.into_iter().collect();
    all.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then(a.1.cmp(&b.1)));
    all
}

fn structure_name(table: &[Vec<usize>]) -> String {
    let n = table.len();
    let order_of = |a: usize| {
        let mut x = a;
        let mut k = 1;
        while x != 0 {
            x = table[x][a];
            k += 1;
        }
        k
    };
    let abelian = (0..n).all(|a| (0..n).all(|b| table[a][b] == table[b][a]));
    if n == 1 {
        return "trivial".into();
    }
    if (0..n).any(|a| order_of(a) == n) {
        return format!("Z{n}");
    }
    if abelian && (0..n).all(|a| order_of(a) <= 2) {
        return vec!["Z2"; n.trailing_zeros() as usize].join("x");
    }
    format!("order-{n} group")
}

pub fn verify_presentation(p: &PlatycosmPresentation) -> VerificationReport {
    let table = p.holonomy_table();
    let els = p.holonomy_elements();
    let found = els.len();
    let group_order_check = found == p.holonomy_order && els.iter().all(|e| mat_det(&e.rot) == 1);

    let lattice_words_ok = p.lattice_words.len() == 3
        && p.lattice_words.iter().enumerate().all(|(k, w)| match p.eval(w) {
            Ok(m) => m.is_translation() && m.trans == p.lattice[k],
            Err(_) => false,
        });

    // a screw of order 6 needs six letters before it returns to a translation
    let short = elements_up_to(p, 4.max(p.holonomy_order));
    let translations: Vec<[i64; 3]> = short
        .iter()
        .filter(|(g, _)| g.is_translation())
        .map(|(g, _)| p.integral_lattice_coords(&g.trans))
        .collect::<Option<Vec<_>>>()
        .unwrap_or_default();
    let all_integral = short.iter().filter(|(g, _)| g.is_translation()).count() == translations.len();
    let lattice_span = all_integral && minors_gcd(&translations) == 1;

    let mut torsion_witness = None;
    for (g, w) in elements_up_to(p, 6) {
        if !g.is_translation() && g.has_fixed_point() {
            torsion_witness = Some(w);
            break;
        }
    }

    // the table must be a group law compatible with evaluating lifts
    let mut holonomy_quotient = true;
    for a in 0..found {
        for b in 0..found {
            let w = concat(&[&els[a].lift, &els[b].lift]);
            let r = p.eval(&w).unwrap().rot;
            holonomy_quotient &= r == els[table[a][b]].rot;
        }
    }
    let quotient_structure = structure_name(&table);
    holonomy_quotient &= quotient_structure == expected_structure(&p.name);

    let relations_ok = p.relations().iter().all(|r| p.eval(r).map(|m| m.is_identity()).unwrap_or(false));

    VerificationReport {
        name: p.name.clone(),
        group_order_check,
        holonomy_order_found: found,
        lattice_span,
        lattice_words_ok,
        torsion_free: torsion_witness.is_none(),
        torsion_witness,
        holonomy_quotient,
        quotient_structure,
        cayley_table: table,
        relations_ok,
    }
}

fn expected_structure(name: &str) -> String {
    match name {
        "G1" => "trivial",
        "G2" => "Z2",
        "G3" => "Z3",
        "G4" => "Z4",
        "G5" => "Z6",
        _ => "Z2xZ2",
    }
    .into()
}

/// gcd of all 3×3 minors of a set of integer vectors: 1 iff they generate Z³.
pub fn minors_gcd(vs: &[[i64; 3]]) -> i64 {
    let mut g = 0i64;
    let uniq: Vec<[i64; 3]> = {
        let mut s = HashSet::new();
        vs.iter().filter(|v| **v != [0, 0, 0] && s.insert(**v)).copied().collect()
    };
    for i in 0..uniq.len() {
        for j in i + 1..uniq.len() {
            for k in j + 1..uniq.len() {
                let m = [uniq[i], uniq[j], uniq[k]];
                g = g.gcd(&mat_det(&m));
                if g == 1 {
                    return 1;
                }
            }
        }
    }
    g
}

/// Checks that the deck action maps the N³ grid of spacing 1/N to itself.
pub fn equivariant_grid(p: &PlatycosmPresentation, n: usize) -> Result<(), PlatycosmError> {
    if n < 2 {
        return Err(PlatycosmError::IncompatibleResolution { n, generator: 0, reason: "N must be at least 2".into() });
    }
    for (gi, g) in p.gens.iter().enumerate() {
        if let Some(t) = g.trans.iter().find(|t| !(**t * qi(n as i64)).is_integer()) {
            return Err(PlatycosmError::IncompatibleResolution {
                n,
                generator: gi,
                reason: format!("translation component {t} times {n} is not an integer"),
            });
        }
        let signed_perm = g.rot.iter().all(|row| row.iter().filter(|x| **x != 0).count() == 1)
            && g.rot.iter().flatten().all(|x| x.abs() <= 1);
        if !signed_perm {
            return Err(PlatycosmError::IncompatibleResolution {
                n,
                generator: gi,
                reason: "rotation part does not permute grid axes up to sign".into(),
            });
        }
    }
    Ok(())
}

pub mod qvec_serde {
    use super::{Q, QVec3};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn fmt(x: &Q) -> String {
        if x.is_integer() {
            x.numer().to_string()
        } else {
            format!("{}/{}", x.numer(), x.denom())
        }
    }

    pub fn parse(s: &str) -> Result<Q, String> {
        let parse_i = |t: &str| t.trim().parse::<i64>().map_err(|e| e.to_string());
        match s.split_once('/') {
            Some((a, b)) => {
                let d = parse_i(b)?;
                if d == 0 {
                    return Err("zero denominator".into());
                }
                Ok(Q::new(parse_i(a)?, d))
            }
            None => Ok(Q::from_integer(parse_i(s)?)),
        }
    }

    pub fn serialize<S: Serializer>(v: &QVec3, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(fmt).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<QVec3, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        if v.len() != 3 {
            return Err(serde::de::Error::custom("expected 3 rationals"));
        }
        let p = |i: usize| parse(&v[i]).map_err(serde::de::Error::custom);
        Ok([p(0)?, p(1)?, p(2)?])
    }
}

pub mod qmat_serde {
    use super::{qvec_serde, Q};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[[Q; 3]; 3], s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(|r| r.iter().map(qvec_serde::fmt).collect::<Vec<_>>()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[[Q; 3]; 3], D::Error> {
        let v = Vec::<Vec<String>>::deserialize(d)?;
        let mut out = [[Q::from_integer(0); 3]; 3];
        if v.len() != 3 || v.iter().any(|r| r.len() != 3) {
            return Err(serde::de::Error::custom("expected a 3x3 matrix"));
        }
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = qvec_serde::parse(&v[i][j]).map_err(serde::de::Error::custom)?;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtin_presentations_verify() {
        for name in NAMES {
            let p = presentation(name).unwrap();
            let r = verify_presentation(&p);
            assert!(r.all_pass(), "{name}: {r:?}");
        }
        assert!(verify_presentation(&hantzsche_wendt_d8()).all_pass());
    }

    #[test]
    fn g6_data() {
        let p = presentation("g6").unwrap();
        assert_eq!(p.holonomy_order, 4);
        assert_eq!(p.gens[0].rot, [[1, 0, 0], [0, -1, 0], [0, 0, -1]]);
        assert_eq!(p.gens[1].rot, [[-1, 0, 0], [0, 1, 0], [0, 0, -1]]);
        let r = verify_presentation(&p);
        assert_eq!(r.quotient_structure, "Z2xZ2");
        let aa = p.eval(&[1, 1]).unwrap();
        assert!(aa.is_translation() && aa.trans == [qi(1), qi(0), qi(0)]);
        let bb = p.eval(&[2, 2]).unwrap();
        assert!(bb.is_translation() && bb.trans == [qi(0), qi(1), qi(0)]);
    }

    #[test]
    fn g1_and_g2() {
        let g1 = presentation("G1").unwrap();
        assert_eq!(g1.holonomy_order, 1);
        assert!(g1.gens.iter().all(|g| g.is_translation()));
        assert_eq!(verify_presentation(&g1).quotient_structure, "trivial");
        assert_eq!(presentation("G2").unwrap().holonomy_order, 2);
        assert!(matches!(presentation("G7"), Err(PlatycosmError::UnknownName(_))));
    }

    #[test]
    fn zeroed_translation_breaks_torsion_freeness() {
        let mut p = presentation("G6").unwrap();
        p.gens[1].trans = [qi(0); 3];
        assert!(!verify_presentation(&p).torsion_free);
    }

    #[test]
    fn deck_action_examples() {
        let p = presentation("G6").unwrap();
        let o = [qi(0); 3];
        assert_eq!(deck_action(&p, &[1], &o).unwrap(), [q(1, 2), qi(0), qi(0)]);
        let x = [q(1, 3), q(2, 7), q(-5, 11)];
        assert_eq!(deck_action(&p, &[1, 1], &x).unwrap(), [x[0] + 1, x[1], x[2]]);
        assert_eq!(deck_action(&p, &[], &x).unwrap(), x);
        assert_eq!(deck_action(&p, &[1, 2, -2, -1], &x).unwrap(), x);
    }

    #[test]
    fn forms_action() {
        let p = presentation("G6").unwrap();
        let acts = holonomy_action_on_forms(&p);
        assert_eq!(acts.len(), 4);
        for r in &acts {
            assert_eq!(mat_det(r), 1);
            assert_eq!(mat_mul(r, &transpose(r)), ID3);
        }
        assert_eq!(holonomy_action_on_forms(&presentation("G1").unwrap()), vec![ID3]);
    }

    #[test]
    fn grid_compatibility_parity() {
        let g6 = presentation("G6").unwrap();
        let d8 = hantzsche_wendt_d8();
        let g1 = presentation("G1").unwrap();
        for n in 2..=24 {
            assert_eq!(equivariant_grid(&g6, n).is_ok(), n % 2 == 0);
            assert_eq!(equivariant_grid(&d8, n).is_ok(), n % 4 == 0);
            assert!(equivariant_grid(&g1, n).is_ok());
        }
        assert!(equivariant_grid(&presentation("G3").unwrap(), 6).is_err());
    }

    #[test]
    fn relations_hold_exactly() {
        for name in NAMES {
            let p = presentation(name).unwrap();
            for r in p.relations() {
                assert!(p.eval(&r).unwrap().is_identity(), "{name}: {r:?}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let p = presentation("G6").unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: PlatycosmPresentation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
