//! Closed G2-structures with coassociative fibres over flat 3-manifolds.
//!
//! Basis convention on R⁷ = R⁴ ⊕ R³: `e₀..e₃` span the fibre, `e₄..e₆` the
//! base. The flat hyperkähler triple is
//! `ω₁ = e₀₃ + e₁₂`, `ω₂ = e₀₂ − e₁₃`, `ω₃ = e₀₁ + e₂₃`
//! and the standard form is `φ = Σ dxᵢ∧ωᵢ + λ dx₁₂₃`.

use crate::char_variety::{self, FixedLocus, Representation, TorusClass};
use crate::higgs_harmonic::{self, Grid, HiggsError, HiggsField, SolveOptions, Twist};
use crate::lie_core::{self, LieContext};
use crate::linalg::c64;
use crate::platycosm::{mat_inv, transpose, IMat3, PlatycosmPresentation};
use crate::spectral_cover::{self, SpectralCoverData, SpectralError};
use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum G2Error {
    #[error("triple is not hypersymplectic (min eigenvalue of Q = {0:e})")]
    NotHypersymplectic(f64),
    #[error("fibre map is not an isometry (defect {0:e}); only flat twists are supported")]
    UnsupportedTwist(f64),
    #[error("no fibre map recorded for a holonomy element")]
    MissingFibreMap,
    #[error("sheets are not closed (Lagrangian residual {0:e})")]
    NotClosed(f64),
    #[error("cover is ramified at {0} vertices")]
    Ramified(usize),
    #[error("period section does not integrate θ (residual {0:e})")]
    Inconsistent(f64),
    #[error("input is not in the fixed locus (distance {0:e})")]
    NotInFixedLocus(f64),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Higgs(#[from] HiggsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Char(#[from] char_variety::CharError),
}

pub type Mat4 = [[f64; 4]; 4];
pub type Mat3 = [[f64; 3]; 3];
type Dense = [f64; 128];

// sign of e_a ∧ e_b relative to the sorted basis element
fn wedge_sign(a: u8, b: u8) -> f64 {
    let mut swaps = 0;
    for i in 0..7 {
        if a & (1 << i) != 0 {
            swaps += (b & ((1u8 << i) - 1)).count_ones();
        }
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn wedge(a: &Dense, b: &Dense) -> Dense {
    let mut out = [0.0; 128];
    for (ma, ca) in a.iter().enumerate() {
        if *ca == 0.0 {
            continue;
        }
        for (mb, cb) in b.iter().enumerate() {
            if *cb == 0.0 || ma & mb != 0 {
                continue;
            }
            out[ma | mb] += wedge_sign(ma as u8, mb as u8) * ca * cb;
        }
    }
    out
}

fn interior(u: &[f64; 7], f: &Dense) -> Dense {
    let mut out = [0.0; 128];
    for (m, c) in f.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        for i in 0..7 {
            if m & (1 << i) != 0 && u[i] != 0.0 {
                let below = (m & ((1 << i) - 1)).count_ones();
                let s = if below % 2 == 0 { 1.0 } else { -1.0 };
                out[m & !(1 << i)] += s * u[i] * c;
            }
        }
    }
    out
}

/// Increasing index triples of `0..7` in lexicographic order.
pub fn triples() -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(35);
    for i in 0..7 {
        for j in i + 1..7 {
            for k in j + 1..7 {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// A 3-form on R⁷ by its 35 coefficients on `eᵢ∧eⱼ∧eₖ`, `i<j<k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeForm7 {
    pub coeffs: Vec<f64>,
}

impl ThreeForm7 {
    pub fn zero() -> Self {
        ThreeForm7 { coeffs: vec![0.0; 35] }
    }

    pub fn basis(i: usize, j: usize, k: usize) -> Self {
        let mut f = ThreeForm7::zero();
        let pos = triples().iter().position(|t| *t == [i, j, k]).expect("increasing indices below 7");
        f.coeffs[pos] = 1.0;
        f
    }

    fn to_dense(&self) -> Dense {
        let mut d = [0.0; 128];
        for (t, c) in triples().iter().zip(&self.coeffs) {
            d[(1 << t[0]) | (1 << t[1]) | (1 << t[2])] = *c;
        }
        d
    }

    fn from_dense(d: &Dense) -> Self {
        ThreeForm7 { coeffs: triples().iter().map(|t| d[(1 << t[0]) | (1 << t[1]) | (1 << t[2])]).collect() }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.to_dense()[(1 << i) | (1 << j) | (1 << k)]
    }

    pub fn add(&self, other: &ThreeForm7) -> Self {
        ThreeForm7 { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, t: f64) -> Self {
        ThreeForm7 { coeffs: self.coeffs.iter().map(|a| a * t).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormMetric {
    /// `B(u,v)·vol = (1/6)(u⌟φ)∧(v⌟φ)∧φ`
    pub b: Vec<[f64; 7]>,
    pub positive: bool,
    pub g: Option<Vec<[f64; 7]>>,
}

pub fn metric_from_3form(phi: &ThreeForm7) -> FormMetric {
    let d = phi.to_dense();
    let contractions: Vec<Dense> = (0..7)
        .map(|i| {
            let mut u = [0.0; 7];
            u[i] = 1.0;
            interior(&u, &d)
        })
        .collect();
    let mut b = SMatrix::<f64, 7, 7>::zeros();
    for i in 0..7 {
        for j in i..7 {
            let top = wedge(&wedge(&contractions[i], &contractions[j]), &d)[127] / 6.0;
            b[(i, j)] = top;
            b[(j, i)] = top;
        }
    }
    let rows = |m: &SMatrix<f64, 7, 7>| (0..7).map(|i| [0, 1, 2, 3, 4, 5, 6].map(|j| m[(i, j)])).collect::<Vec<_>>();
    let eig = b.symmetric_eigen().eigenvalues;
    let scale = eig.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let definite_sign = if scale == 0.0 {
        0.0
    } else if eig.iter().all(|x| *x > 1e-12 * scale) {
        1.0
    } else if eig.iter().all(|x| *x < -1e-12 * scale) {
        // reversed orientation
        -1.0
    } else {
        0.0
    };
    if definite_sign == 0.0 {
        return FormMetric { b: rows(&b), positive: false, g: None };
    }
    let oriented = b * definite_sign;
    let g = oriented / oriented.determinant().powf(1.0 / 9.0);
    FormMetric { b: rows(&b), positive: true, g: Some(rows(&g)) }
}

/// Three 2-forms on R⁴ as antisymmetric matrices (`ω = Σ_{p<q} ω[p][q] e_p∧e_q`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HKTriple {
    pub omega: [Mat4; 3],
    pub vol: f64,
}

fn two_form(entries: &[(usize, usize, f64)]) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for &(p, q, c) in entries {
        m[p][q] += c;
        m[q][p] -= c;
    }
    m
}

impl HKTriple {
    pub fn flat() -> Self {
        HKTriple {
            omega: [
                two_form(&[(0, 3, 1.0), (1, 2, 1.0)]),
                two_form(&[(0, 2, 1.0), (1, 3, -1.0)]),
                two_form(&[(0, 1, 1.0), (2, 3, 1.0)]),
            ],
            vol: 1.0,
        }
    }

    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in &self.omega {
            for p in 0..4 {
                for q in 0..4 {
                    worst = worst.max((w[p][q] + w[q][p]).abs());
                }
            }
        }
        worst
    }

    /// Pullback `A*ω = Aᵀ ω A` by a linear fibre map.
    pub fn pullback(&self, a: &Mat4) -> Self {
        HKTriple { omega: self.omega.map(|w| pullback2(a, &w)), vol: self.vol }
    }

    pub fn combine(&self, m: &Mat3) -> Self {
        let mut omega = [[[0.0; 4]; 4]; 3];
        for i in 0..3 {
            for k in 0..3 {
                for p in 0..4 {
                    for q in 0..4 {
                        omega[i][p][q] += m[i][k] * self.omega[k][p][q];
                    }
                }
            }
        }
        HKTriple { omega, vol: self.vol }
    }
}

fn pullback2(a: &Mat4, w: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            for r in 0..4 {
                for s in 0..4 {
                    out[p][q] += a[r][p] * w[r][s] * a[s][q];
                }
            }
        }
    }
    out
}

/// Coefficient of `e₀₁₂₃` in `a∧b`.
pub fn wedge4(a: &Mat4, b: &Mat4) -> f64 {
    a[0][1] * b[2][3] - a[0][2] * b[1][3] + a[0][3] * b[1][2] + a[1][2] * b[0][3] - a[1][3] * b[0][2] + a[2][3] * b[0][1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypersymplecticCheck {
    pub q: Mat3,
    pub min_eigenvalue: f64,
    pub hypersymplectic: bool,
    pub hyperkahler: bool,
}

pub fn hypersymplectic_check(t: &HKTriple) -> HypersymplecticCheck {
    let mut q = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            q[i][j] = wedge4(&t.omega[i], &t.omega[j]) / t.vol;
        }
    }
    let m = SMatrix::<f64, 3, 3>::from_fn(|i, j| q[i][j]);
    let eig = m.symmetric_eigen().eigenvalues;
    let min = eig.min();
    let c = (q[0][0] + q[1][1] + q[2][2]) / 3.0;
    // rounding in a pullback leaves w[p][q] + w[q][p] at the ulp level
    let scale = t.omega.iter().flatten().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    let hypersymplectic = min > 1e-12 && t.antisymmetry_defect() <= 1e-14 * scale.max(1.0);
    let hyperkahler = hypersymplectic && (0..3).all(|i| (0..3).all(|j| (q[i][j] - if i == j { c } else { 0.0 }).abs() <= 1e-10));
    HypersymplecticCheck { q, min_eigenvalue: min, hypersymplectic, hyperkahler }
}

fn triple_dense(t: &HKTriple) -> [Dense; 3] {
    t.omega.map(|w| {
        let mut d = [0.0; 128];
        for p in 0..4 {
            for q in p + 1..4 {
                d[(1 << p) | (1 << q)] = w[p][q];
            }
        }
        d
    })
}

/// `φ = Σ dxᵢ∧ωᵢ + λ dx₁₂₃` with `dxᵢ = e₄₊ᵢ`.
pub fn standard_phi(t: &HKTriple, lambda: f64) -> Result<ThreeForm7, G2Error> {
    let check = hypersymplectic_check(t);
    if !check.hypersymplectic {
        return Err(G2Error::NotHypersymplectic(check.min_eigenvalue));
    }
    Ok(assemble_phi(t, lambda))
}

fn assemble_phi(t: &HKTriple, lambda: f64) -> ThreeForm7 {
    let om = triple_dense(t);
    let mut phi = [0.0; 128];
    for (i, w) in om.iter().enumerate() {
        let mut dx = [0.0; 128];
        dx[1 << (4 + i)] = 1.0;
        let term = wedge(&dx, w);
        for m in 0..128 {
            phi[m] += term[m];
        }
    }
    phi[(1 << 4) | (1 << 5) | (1 << 6)] += lambda;
    ThreeForm7::from_dense(&phi)
}

/// Coefficients on `e₀₁₂, e₀₁₃, e₀₂₃, e₁₂₃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FibreThreeForm {
    pub coeffs: [f64; 4],
}

pub fn restrict_to_fiber(phi: &ThreeForm7) -> FibreThreeForm {
    FibreThreeForm { coeffs: [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]].map(|[i, j, k]| phi.get(i, j, k)) }
}

/// Matrix `M` with `A*ωᵢ = Σ_k M_ik ω_k` for the flat triple, and the
/// part of `A*ωᵢ` outside the span of the triple.
pub fn induced_triple_action(a: &Mat4) -> (Mat3, f64) {
    let flat = HKTriple::flat();
    let pulled = flat.pullback(a);
    let inner = |x: &Mat4, y: &Mat4| (0..4).map(|p| (0..4).map(|q| x[p][q] * y[p][q]).sum::<f64>()).sum::<f64>();
    let mut m = [[0.0; 3]; 3];
    let mut rest: f64 = 0.0;
    for i in 0..3 {
        for k in 0..3 {
            m[i][k] = inner(&pulled.omega[i], &flat.omega[k]) / inner(&flat.omega[k], &flat.omega[k]);
        }
        let proj = flat.combine(&m).omega[i];
        for p in 0..4 {
            for q in 0..4 {
                rest = rest.max((pulled.omega[i][p][q] - proj[p][q]).abs());
            }
        }
    }
    (m, rest)
}

fn diag4(s: [f64; 4]) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        m[i][i] = s[i];
    }
    m
}

/// Fibre maps of G6 on C² = R⁴: `αβ ↦ (z₁, −z₂)`, `β ↦ (z̄₁, z̄₂)` and
/// their product for `α`, keyed by the holonomy rotation.
pub fn g6_fibre_maps() -> Vec<(IMat3, Mat4)> {
    vec![
        ([[1, 0, 0], [0, 1, 0], [0, 0, 1]], diag4([1.0, 1.0, 1.0, 1.0])),
        ([[1, 0, 0], [0, -1, 0], [0, 0, -1]], diag4([1.0, -1.0, -1.0, 1.0])),
        ([[-1, 0, 0], [0, 1, 0], [0, 0, -1]], diag4([1.0, -1.0, 1.0, -1.0])),
        ([[-1, 0, 0], [0, -1, 0], [0, 0, 1]], diag4([1.0, 1.0, -1.0, -1.0])),
    ]
}

/// The Example-type triple action for G6.
pub fn g6_triple_action() -> Vec<(IMat3, Mat3)> {
    g6_fibre_maps().into_iter().map(|(r, a)| (r, induced_triple_action(&a).0)).collect()
}

/// True iff for every holonomy element the matrix acting on `(dx₁,dx₂,dx₃)`
/// equals the one acting on `(ω₁,ω₂,ω₃)`, so `Σ dxᵢ∧ωᵢ` is invariant.
pub fn equivariance_check(p: &PlatycosmPresentation, action: &[(IMat3, Mat3)]) -> bool {
    p.holonomy_elements().iter().all(|h| {
        let Some((_, m)) = action.iter().find(|(r, _)| *r == h.rot) else { return false };
        let forms = transpose(&mat_inv(&h.rot));
        (0..3).all(|i| (0..3).all(|k| (m[i][k] - forms[i][k] as f64).abs() <= 1e-12))
    })
}

/// `(η, μ, H)` on a flat grid: fibre-constant triples `ωᵢ(x)` with
/// `η = Σ ωᵢ dxᵢ`, the positive function `λ` in `μ = λ vol_Q`, and the flat
/// connection given by linear fibre maps per holonomy element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonaldsonData {
    pub grid: Grid,
    pub eta: Vec<HKTriple>,
    pub lambda: Vec<f64>,
    pub fibre_maps: Vec<(IMat3, Mat4)>,
}

impl DonaldsonData {
    pub fn flat_t3(n: usize) -> Result<Self, G2Error> {
        let p = crate::platycosm::presentation("G1").map_err(HiggsError::from)?;
        let grid = Grid::new(&p, n)?;
        let len = grid.len();
        Ok(DonaldsonData { grid, eta: vec![HKTriple::flat(); len], lambda: vec![1.0; len], fibre_maps: vec![(crate::platycosm::identity_mat(), diag4([1.0; 4]))] })
    }

    pub fn g6(n: usize) -> Result<Self, G2Error> {
        let p = crate::platycosm::presentation("G6").map_err(HiggsError::from)?;
        let grid = Grid::new(&p, n)?;
        let len = grid.len();
        Ok(DonaldsonData { grid, eta: vec![HKTriple::flat(); len], lambda: vec![1.0; len], fibre_maps: g6_fibre_maps() })
    }

    pub fn phi_at(&self, v: usize) -> ThreeForm7 {
        assemble_phi(&self.eta[v], self.lambda[v])
    }
}

pub const ADIABATIC_LABELS: [&str; 6] = ["d_H eta", "d_f eta", "d_f mu", "d_H *mu", "d_f *eta", "d_H *eta"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonaldsonResiduals {
    pub d_f_eta: f64,
    pub d_h_eta: f64,
    /// `d_f μ + F_H(η)`
    pub mu_eq: f64,
    pub curvature: f64,
    /// in the order of `ADIABATIC_LABELS`
    pub adiabatic: [f64; 6],
    pub equivariance: f64,
    pub min_q_eigenvalue: f64,
    pub all_positive: bool,
}

impl DonaldsonResiduals {
    pub fn max_adiabatic(&self) -> f64 {
        self.adiabatic.iter().cloned().fold(0.0, f64::max)
    }
}

fn centered_triple(data: &DonaldsonData, v: usize, comp: usize, d: usize) -> Mat4 {
    let g = &data.grid;
    let up = &data.eta[g.neighbor(v, d, 1).0].omega[comp];
    let dn = &data.eta[g.neighbor(v, d, -1).0].omega[comp];
    let mut out = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            out[p][q] = (up[p][q] - dn[p][q]) / (2.0 * g.h);
        }
    }
    out
}

fn sup4(m: &Mat4) -> f64 {
    m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Residuals of the closed-structure equations and the adiabatic
/// torsion-free system. Fibre differentials vanish identically because the
/// data is stored fibre-constant; horizontal ones are centered differences
/// on the cover torus (lattice translations act trivially on the fibre).
pub fn donaldson_residuals(data: &DonaldsonData) -> Result<DonaldsonResiduals, G2Error> {
    let g = &data.grid;
    for (_, a) in &data.fibre_maps {
        let mut defect: f64 = 0.0;
        for p in 0..4 {
            for q in 0..4 {
                let dot: f64 = (0..4).map(|r| a[r][p] * a[r][q]).sum();
                defect = defect.max((dot - if p == q { 1.0 } else { 0.0 }).abs());
            }
        }
        if defect > 1e-12 {
            return Err(G2Error::UnsupportedTwist(defect));
        }
    }
    let (mut d_h_eta, mut d_h_star_mu, mut d_h_star_eta): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for v in 0..g.len() {
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let a = centered_triple(data, v, j, i);
            let b = centered_triple(data, v, i, j);
            let mut c = [[0.0; 4]; 4];
            for p in 0..4 {
                for q in 0..4 {
                    c[p][q] = a[p][q] - b[p][q];
                }
            }
            d_h_eta = d_h_eta.max(sup4(&c));
        }
        let mut div = [[0.0; 4]; 4];
        for i in 0..3 {
            let a = centered_triple(data, v, i, i);
            for p in 0..4 {
                for q in 0..4 {
                    div[p][q] += a[p][q];
                }
            }
        }
        d_h_star_eta = d_h_star_eta.max(sup4(&div));
        for d in 0..3 {
            let grad = (data.lambda[g.neighbor(v, d, 1).0] - data.lambda[g.neighbor(v, d, -1).0]) / (2.0 * g.h);
            d_h_star_mu = d_h_star_mu.max(grad.abs());
        }
    }
    // flat connection: F_H = 0; fibre-constant storage: d_f of anything is 0
    let (d_f_eta, d_f_mu, d_f_star_eta, curvature) = (0.0, 0.0, 0.0, 0.0);
    let rep = Representation::trivial(g.presentation.clone(), 2);
    let tw = Twist::new(g, &rep)?;
    let mut equivariance: f64 = 0.0;
    for dm in &tw.deck {
        let a = data.fibre_maps.iter().find(|(r, _)| *r == dm.rot).ok_or(G2Error::MissingFibreMap)?.1;
        let rot = dm.rot;
        for (x, (y, _)) in dm.targets.iter().enumerate() {
            let pulled = data.eta[*y].pullback(&a);
            for k in 0..3 {
                let mut expect = [[0.0; 4]; 4];
                for i in 0..3 {
                    for p in 0..4 {
                        for q in 0..4 {
                            expect[p][q] += rot[i][k] as f64 * pulled.omega[i][p][q];
                        }
                    }
                }
                let mut diff = [[0.0; 4]; 4];
                for p in 0..4 {
                    for q in 0..4 {
                        diff[p][q] = expect[p][q] - data.eta[x].omega[k][p][q];
                    }
                }
                equivariance = equivariance.max(sup4(&diff));
            }
            equivariance = equivariance.max((data.lambda[x] - data.lambda[*y]).abs());
        }
    }
    let mut min_q = f64::INFINITY;
    let mut all_positive = true;
    for v in 0..g.len() {
        min_q = min_q.min(hypersymplectic_check(&data.eta[v]).min_eigenvalue);
        all_positive &= data.lambda[v] > 0.0 && metric_from_3form(&data.phi_at(v)).positive;
    }
    Ok(DonaldsonResiduals {
        d_f_eta,
        d_h_eta,
        mu_eq: d_f_mu + curvature,
        curvature,
        adiabatic: [d_h_eta, d_f_eta, d_f_mu, d_h_star_mu, d_f_star_eta, d_h_star_eta],
        equivariance,
        min_q_eigenvalue: min_q,
        all_positive,
    })
}

/// Affine section `h_r` per spectral sheet with `dh_r = ξ_r`, stored on the
/// cube as `h_r(x) = a_r·x + f_r(x)` with periods `a_r` and periodic `f_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodSection {
    pub grid: Grid,
    /// `values[v][r]`
    #[serde(with = "crate::linalg::complex_serde")]
    pub values: Vec<Vec<Complex64>>,
    #[serde(with = "crate::linalg::complex_serde")]
    pub periods: Vec<Vec<Complex64>>,
    /// `f_r = h_r − a_r·x`
    #[serde(with = "crate::linalg::complex_serde")]
    pub periodic: Vec<Vec<Complex64>>,
    /// per generator and sheet: `h_{σ(r)}(g·x) − h_r(x)`
    #[serde(with = "crate::linalg::complex_serde")]
    pub deck_constants: Vec<Vec<Complex64>>,
    /// spread of those constants over vertices (0 for an affine bundle section)
    pub deck_spread: f64,
    pub gradient_residual: f64,
}

impl PeriodSection {
    pub fn from_values(grid: &Grid, values: Vec<Vec<Complex64>>, periods: Vec<Vec<Complex64>>) -> Self {
        let periodic = values
            .iter()
            .enumerate()
            .map(|(v, row)| {
                let x = grid.point(v);
                row.iter().zip(&periods).map(|(h, a)| h - (a[0] * x[0] + a[1] * x[1] + a[2] * x[2])).collect()
            })
            .collect();
        Self::from_parts(grid, values, periods, periodic)
    }

    fn from_parts(grid: &Grid, values: Vec<Vec<Complex64>>, periods: Vec<Vec<Complex64>>, periodic: Vec<Vec<Complex64>>) -> Self {
        PeriodSection { grid: grid.clone(), values, periods, periodic, deck_constants: Vec::new(), deck_spread: 0.0, gradient_residual: 0.0 }
    }

    pub fn sheets(&self) -> usize {
        self.periods.len()
    }

    /// Centered difference of sheet `r`: the period plus the difference of the periodic part.
    fn centered(&self, v: usize, r: usize, d: usize) -> Complex64 {
        let g = &self.grid;
        let up = self.periodic[g.neighbor(v, d, 1).0][r];
        let dn = self.periodic[g.neighbor(v, d, -1).0][r];
        self.periods[r][d] + (up - dn) / (2.0 * g.h)
    }

    fn periodic_diff(&self, v: usize, r: usize, d: usize) -> Complex64 {
        let g = &self.grid;
        (self.periodic[g.neighbor(v, d, 1).0][r] - self.periodic[g.neighbor(v, d, -1).0][r]) / (2.0 * g.h)
    }

    pub fn gradient(&self, v: usize, r: usize) -> [Complex64; 3] {
        [0, 1, 2].map(|d| self.centered(v, r, d))
    }
}

// (−Σ DᵢDᵢ) applied to a periodic scalar field
fn neg_laplacian(g: &Grid, f: &[Complex64]) -> Vec<Complex64> {
    let first: Vec<[Complex64; 3]> = (0..g.len())
        .map(|v| [0, 1, 2].map(|d| (f[g.neighbor(v, d, 1).0] - f[g.neighbor(v, d, -1).0]) / (2.0 * g.h)))
        .collect();
    (0..g.len())
        .map(|v| -(0..3).map(|d| (first[g.neighbor(v, d, 1).0][d] - first[g.neighbor(v, d, -1).0][d]) / (2.0 * g.h)).sum::<Complex64>())
        .collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

// least-squares potential: minimise ‖Df − r‖ by CG on the normal equations
fn potential(g: &Grid, r: &[[Complex64; 3]]) -> Vec<Complex64> {
    let rhs: Vec<Complex64> = (0..g.len())
        .map(|v| -(0..3).map(|d| (r[g.neighbor(v, d, 1).0][d] - r[g.neighbor(v, d, -1).0][d]) / (2.0 * g.h)).sum::<Complex64>())
        .collect();
    let mut x = vec![c64(0.0, 0.0); g.len()];
    let mut res = rhs.clone();
    let mut p = res.clone();
    let mut rr = dot(&res, &res).re;
    let stop = 1e-30 * dot(&rhs, &rhs).re.max(1e-300);
    for _ in 0..10 * g.len() {
        if rr <= stop {
            break;
        }
        let ap = neg_laplacian(g, &p);
        let alpha = rr / dot(&p, &ap).re;
        for i in 0..x.len() {
            x[i] += p[i] * alpha;
            res[i] -= ap[i] * alpha;
        }
        let rr_new = dot(&res, &res).re;
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = res[i] + p[i] * beta;
        }
        rr = rr_new;
    }
    // fix the constant: value 0 at the base vertex
    let c = x[0];
    x.iter().map(|z| z - c).collect()
}

/// Integrate the sheets of a closed, unramified Higgs field.
pub fn period_section(theta: &HiggsField, tol: f64) -> Result<PeriodSection, G2Error> {
    let cover = spectral_cover::spectral_cover(theta, 1e-10)?;
    period_section_of_cover(&cover, tol)
}

pub fn period_section_of_cover(cover: &SpectralCoverData, tol: f64) -> Result<PeriodSection, G2Error> {
    let ramified = cover.ramified.iter().filter(|r| **r).count();
    if ramified > 0 {
        return Err(G2Error::Ramified(ramified));
    }
    let scale = cover.sheets.iter().flatten().flatten().map(|z| z.norm()).fold(1.0, f64::max);
    let lag = spectral_cover::lagrangian_residual(cover)?.residual;
    if lag > tol * scale {
        return Err(G2Error::NotClosed(lag));
    }
    if cover.lattice_monodromy.iter().any(|m| m.iter().enumerate().any(|(i, j)| i != *j)) {
        return Err(G2Error::Unsupported("sheets permuted by lattice translations".into()));
    }
    let g = &cover.grid;
    let n = cover.n;
    let mut values = vec![vec![c64(0.0, 0.0); n]; g.len()];
    let mut periodic = vec![vec![c64(0.0, 0.0); n]; g.len()];
    let mut periods = Vec::with_capacity(n);
    for r in 0..n {
        let a: [Complex64; 3] = [0, 1, 2].map(|d| cover.sheets.iter().map(|s| s[r][d]).sum::<Complex64>() / g.len() as f64);
        let rest: Vec<[Complex64; 3]> = cover.sheets.iter().map(|s| [0, 1, 2].map(|d| s[r][d] - a[d])).collect();
        let f = potential(g, &rest);
        for v in 0..g.len() {
            let x = g.point(v);
            values[v][r] = a[0] * x[0] + a[1] * x[1] + a[2] * x[2] + f[v];
            periodic[v][r] = f[v];
        }
        periods.push(a.to_vec());
    }
    let mut section = PeriodSection::from_parts(g, values, periods, periodic);
    let mut grad: f64 = 0.0;
    for v in 0..g.len() {
        for r in 0..n {
            let d = section.gradient(v, r);
            for k in 0..3 {
                grad = grad.max((d[k] - cover.sheets[v][r][k]).norm());
            }
        }
    }
    section.gradient_residual = grad;
    // affine monodromy under the deck generators
    let p = &g.presentation;
    let mut spread: f64 = 0.0;
    for (gi, gen) in p.gens.iter().enumerate() {
        let sigma = &cover.monodromy[gi];
        let mut consts: Vec<Option<Complex64>> = vec![None; n];
        for v in 0..g.len() {
            let (y, t) = spectral_cover::deck_shift(g, gen, v);
            for r in 0..n {
                let s = sigma[r];
                let moved = section.values[y][s] + (0..3).map(|k| section.periods[s][k] * t[k] as f64).sum::<Complex64>();
                let c = moved - section.values[v][r];
                match consts[r] {
                    None => consts[r] = Some(c),
                    Some(c0) => spread = spread.max((c - c0).norm()),
                }
            }
        }
        section.deck_constants.push(consts.into_iter().map(|c| c.unwrap_or_default()).collect());
    }
    section.deck_spread = spread;
    if grad > tol * scale {
        return Err(G2Error::Inconsistent(grad));
    }
    Ok(section)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicityReport {
    /// sup over vertices and sheets of `|Σᵢ DᵢDᵢ h|`
    pub residual: f64,
    /// the same over vertices whose two-step stencil stays inside the cube
    pub interior: f64,
    pub consistency: f64,
}

/// Discrete mean-curvature (Laplacian) residual of the graph of `dh`,
/// after checking that `dh` matches the sheets of `cover` up to relabeling.
pub fn harmonicity_residual(h: &PeriodSection, cover: &SpectralCoverData, tol: f64) -> Result<HarmonicityReport, G2Error> {
    let g = &h.grid;
    let n = h.sheets();
    let grads: Vec<Vec<[Complex64; 3]>> = (0..g.len()).map(|v| (0..n).map(|r| h.gradient(v, r)).collect()).collect();
    let scale = cover.sheets.iter().flatten().flatten().map(|z| z.norm()).fold(1.0, f64::max);
    let mut consistency: f64 = 0.0;
    for v in 0..g.len() {
        let a: Vec<Vec<Complex64>> = grads[v].iter().map(|x| x.to_vec()).collect();
        consistency = consistency.max(lie_core::orbit_distance(&a, &cover.rows(v)));
    }
    if consistency > tol * scale {
        return Err(G2Error::Inconsistent(consistency));
    }
    let (mut residual, mut interior): (f64, f64) = (0.0, 0.0);
    for v in 0..g.len() {
        let c = g.coords(v);
        let inside = c.iter().all(|x| *x >= 2 && *x + 2 < g.n);
        for r in 0..n {
            let lap: Complex64 = (0..3).map(|d| (h.periodic_diff(g.neighbor(v, d, 1).0, r, d) - h.periodic_diff(g.neighbor(v, d, -1).0, r, d)) / (2.0 * g.h)).sum();
            residual = residual.max(lap.norm());
            if inside {
                interior = interior.max(lap.norm());
            }
        }
    }
    Ok(HarmonicityReport { residual, interior, consistency })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothing {
    Y1,
    Y2,
    Y3,
    Singular,
}

impl Smoothing {
    pub fn from_axis(axis: usize) -> Self {
        [Smoothing::Y1, Smoothing::Y2, Smoothing::Y3][axis]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SmoothingInput {
    /// a class on the fixed locus of `Char(T³, SL(2,C))`
    Class(TorusClass),
    /// a flat section `a₁dx₁ + a₂dx₂ + a₃dx₃` of `T*Q ⊗ u(1)`, up to sign
    Section([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub family: Smoothing,
    pub axis: Option<usize>,
    /// ray parameter `t ≥ 0`
    pub parameter: f64,
    /// argument of the eigenvalue on the free axis (C-field direction)
    pub c_field: f64,
    pub convention: String,
}

pub const AXIS_CONVENTION: &str = "axis i paired with Y_i (not fixed by the geometry)";

pub fn classify_smoothing(p: &PlatycosmPresentation, input: &SmoothingInput, tol: f64) -> Result<Classification, G2Error> {
    if p.name != "G6" {
        return Err(G2Error::Unsupported(format!("classification is for G6, got {}", p.name)));
    }
    let convention = AXIS_CONVENTION.to_string();
    match input {
        SmoothingInput::Section(a) => {
            let nonzero: Vec<usize> = (0..3).filter(|k| a[*k].abs() > tol).collect();
            match nonzero.as_slice() {
                [] => Ok(Classification { family: Smoothing::Singular, axis: None, parameter: 0.0, c_field: 0.0, convention }),
                [k] => Ok(Classification { family: Smoothing::from_axis(*k), axis: Some(*k), parameter: a[*k].abs(), c_field: 0.0, convention }),
                _ => {
                    let mut sorted = a.map(f64::abs);
                    sorted.sort_by(f64::total_cmp);
                    Err(G2Error::NotInFixedLocus(sorted[1]))
                }
            }
        }
        SmoothingInput::Class(c) => {
            let locus = char_variety::fixed_locus(p, &LieContext::new(2).expect("n = 2"))?;
            let (best, dist) = nearest_line(&locus, c);
            if dist > tol {
                return Err(G2Error::NotInFixedLocus(dist));
            }
            let axis = locus.components[best].axis;
            let z = c.rows[0][axis];
            let t = z.norm().ln().abs();
            let family = if t <= tol { Smoothing::Singular } else { Smoothing::from_axis(axis) };
            let axis = (family != Smoothing::Singular).then_some(axis);
            Ok(Classification { family, axis, parameter: t, c_field: z.arg().abs(), convention })
        }
    }
}

fn nearest_line(locus: &FixedLocus, c: &TorusClass) -> (usize, f64) {
    locus
        .components
        .iter()
        .enumerate()
        .map(|(i, l)| (i, l.distance(c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY))
}

/// A ray of fixed flat sections: `{t·axis : t ≥ 0}` modulo the sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatRay {
    pub direction: [f64; 3],
    pub axis: usize,
    /// sign of each generator's action on the ray
    pub signs: Vec<i32>,
}

/// Additive fixed-point system: constant covectors `a` with `R⁻ᵀa = ±a`
/// for every generator, modulo `a ↦ −a`.
pub fn fixed_flat_sections(p: &PlatycosmPresentation) -> Vec<FlatRay> {
    let gens: Vec<IMat3> = p.gens.iter().map(|g| transpose(&mat_inv(&g.rot))).collect();
    let mut rays: Vec<FlatRay> = Vec::new();
    let count = 1usize << gens.len();
    for mask in 0..count {
        let signs: Vec<i32> = (0..gens.len()).map(|i| if mask & (1 << i) != 0 { -1 } else { 1 }).collect();
        let m = DMatrix::<f64>::from_fn(3 * gens.len(), 3, |row, col| {
            let (gi, i) = (row / 3, row % 3);
            gens[gi][i][col] as f64 - if i == col { signs[gi] as f64 } else { 0.0 }
        });
        let svd = m.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors");
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s > 1e-12 {
                continue;
            }
            let dir = [vt[(k, 0)], vt[(k, 1)], vt[(k, 2)]];
            let axis = (0..3).max_by(|a, b| dir[*a].abs().total_cmp(&dir[*b].abs())).expect("three entries");
            let sgn = dir[axis].signum();
            let dir = dir.map(|x| x * sgn);
            if !rays.iter().any(|r| (0..3).all(|i| (r.direction[i] - dir[i]).abs() < 1e-9)) {
                rays.push(FlatRay { direction: dir, axis, signs: signs.clone() });
            }
        }
        // null spaces of dimension 3 would need every vector; they only occur for trivial holonomy
        if svd.singular_values.iter().all(|s| *s <= 1e-12) && !gens.is_empty() {
            rays.clear();
        }
    }
    rays.sort_by_key(|r| r.axis);
    rays
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub line: String,
    pub axis: usize,
    pub family: Smoothing,
    pub z: [f64; 2],
    pub log_abs_z: f64,
    pub ray_parameter: f64,
    pub parameter_error: f64,
    pub c_field: f64,
    pub ray_axis: usize,
    pub harmonic_tension: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub grid_n: usize,
    pub char_components: usize,
    pub flat_components: usize,
    pub component_match: usize,
    pub bijection: bool,
    pub rows: Vec<DualityRow>,
    pub max_parameter_error: f64,
    /// isolated rigid classes (no flat-section counterpart), reported only
    pub rigid_unmatched: usize,
    pub convention: String,
}

/// Sample points `z` on every line used by the crosscheck.
pub fn duality_samples() -> Vec<Complex64> {
    vec![Complex64::from_polar(2.0, 0.4), Complex64::from_polar(0.3, -1.1)]
}

/// Compare the fixed locus of the character variety with the fixed flat
/// sections: each line is matched to a ray through the harmonic Higgs field
/// of a lifted representation, whose sheets are `±(log|z|)dx_axis`.
pub fn duality_crosscheck(p: &PlatycosmPresentation, grid_n: usize, samples: &[Complex64]) -> Result<DualityReport, G2Error> {
    if p.name != "G6" {
        return Err(G2Error::Unsupported(format!("duality crosscheck is for G6, got {}", p.name)));
    }
    let ctx = LieContext::new(2).expect("n = 2");
    let locus = char_variety::fixed_locus(p, &ctx)?;
    let rays = fixed_flat_sections(p);
    let grid = Grid::new(p, grid_n)?;
    let opts = SolveOptions::default();
    let mut rows = Vec::new();
    let mut matched = vec![false; rays.len()];
    let mut line_ok = vec![true; locus.components.len()];
    for (li, line) in locus.components.iter().enumerate() {
        let mut ray_of_line = None;
        for z in samples {
            let class = line.parametrize(*z);
            let rep = char_variety::lift_representation(p, &class)?;
            let sol = higgs_harmonic::harmonic_metric_solve(&rep, &grid, &opts, higgs_harmonic::Initial::Identity)?;
            let theta = higgs_harmonic::theta_from_metric(&sol.k, &rep)?;
            let cover = spectral_cover::spectral_cover(&theta, 1e-8)?;
            let xi = cover.sheets[0][0];
            let section = [xi[0].re, xi[1].re, xi[2].re];
            let cls = classify_smoothing(p, &SmoothingInput::Section(section), 1e-6)?;
            let ray_axis = cls.axis.unwrap_or(usize::MAX);
            let ray = rays.iter().position(|r| r.axis == ray_axis);
            match (ray, ray_of_line) {
                (Some(r), None) => ray_of_line = Some(r),
                (Some(r), Some(prev)) if r == prev => {}
                _ => line_ok[li] = false,
            }
            let log_abs_z = z.norm().ln();
            rows.push(DualityRow {
                line: line.label.clone(),
                axis: line.axis,
                family: Smoothing::from_axis(line.axis),
                z: [z.re, z.im],
                log_abs_z,
                ray_parameter: cls.parameter,
                parameter_error: (log_abs_z.abs() - cls.parameter).abs(),
                c_field: z.arg(),
                ray_axis,
                harmonic_tension: sol.tension,
            });
        }
        match ray_of_line {
            Some(r) if !matched[r] && line_ok[li] && rays[r].axis == line.axis => matched[r] = true,
            _ => line_ok[li] = false,
        }
    }
    let component_match = matched.iter().filter(|m| **m).count();
    let max_parameter_error = rows.iter().map(|r| r.parameter_error).fold(0.0, f64::max);
    let rigid = char_variety::rigid_components(p, &ctx)?;
    Ok(DualityReport {
        grid_n,
        char_components: locus.components.len(),
        flat_components: rays.len(),
        component_match,
        bijection: component_match == locus.components.len() && component_match == rays.len() && line_ok.iter().all(|x| *x),
        rows,
        max_parameter_error,
        rigid_unmatched: rigid.nontrivial_count(),
        convention: AXIS_CONVENTION.to_string(),
    })
}
