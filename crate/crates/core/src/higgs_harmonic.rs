//! Higgs fields and harmonic metrics on a vertex grid of the cover torus.
//!
//! Fields are sampled on the `N³` vertices of `[0,1)³` (lattice units).
//! Values beyond the fundamental cube are defined by the twist: a metric
//! obeys `k(x + e) = ρ(e) k(x) ρ(e)ᴴ` and an endomorphism-valued field obeys
//! `θ(x + e) = ρ(e) θ(x) ρ(e)⁻¹`. With this convention `θ = ½ dk·k⁻¹` is an
//! endomorphism of the flat bundle and the harmonic equation reads
//! `Σᵢ ∂ᵢθᵢ = 0`.
//!
//! The solver additionally keeps `k` equivariant for the full deck group, so
//! for an irreducible representation the minimizer is unique.

use crate::char_variety::Representation;
use crate::linalg::{self, c64, cmat_serde, CMat};
use crate::platycosm::{equivariant_grid, qi, PlatycosmError, PlatycosmPresentation, QVec3};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HiggsError {
    #[error(transparent)]
    Grid(#[from] PlatycosmError),
    #[error("grid is not a unit-cube torus ({0}); only G1, G2, G4 and G6 are supported")]
    NotUnitCube(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("solver did not converge after {iterations} iterations (tension {tension:e})")]
    NotConverged { iterations: usize, tension: f64 },
    #[error("energy diverged at iteration {0}")]
    DivergentEnergy(usize),
    #[error("twist representation belongs to {found}, grid is {expected}")]
    TwistMismatch { expected: String, found: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub presentation: PlatycosmPresentation,
    pub n: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(p: &PlatycosmPresentation, n: usize) -> Result<Self, HiggsError> {
        equivariant_grid(p, n)?;
        if !p.is_unit_cube_torus() {
            return Err(HiggsError::NotUnitCube(p.name.clone()));
        }
        Ok(Grid { presentation: p.clone(), n, h: 1.0 / n as f64 })
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n * (c[1] + self.n * c[2])
    }

    pub fn coords(&self, v: usize) -> [usize; 3] {
        [v % self.n, (v / self.n) % self.n, v / (self.n * self.n)]
    }

    pub fn point(&self, v: usize) -> [f64; 3] {
        self.coords(v).map(|c| c as f64 * self.h)
    }

    /// Neighbour of `v` one step along axis `d` in direction `s = ±1`, and
    /// the number of lattice steps crossed (−1, 0 or 1).
    pub fn neighbor(&self, v: usize, d: usize, s: i32) -> (usize, i32) {
        let mut c = self.coords(v);
        let n = self.n as i32;
        let x = c[d] as i32 + s;
        let wrap = x.div_euclid(n);
        c[d] = x.rem_euclid(n) as usize;
        (self.index(c), wrap)
    }

    /// Whether the centered stencil at `v` stays inside the fundamental cube.
    pub fn is_interior(&self, v: usize) -> bool {
        self.coords(v).iter().all(|c| *c > 0 && *c + 1 < self.n)
    }
}

/// Twist data derived from a representation on a grid.
#[derive(Clone, Debug)]
pub struct Twist {
    pub lattice: [CMat; 3],
    pub lattice_inv: [CMat; 3],
    /// per holonomy element: rotation, and per source vertex the target
    /// vertex `y` with `g·x = y + t` and the matrix `T = ρ(t)⁻¹ρ(g)`
    pub deck: Vec<DeckMap>,
}

#[derive(Clone, Debug)]
pub struct DeckMap {
    pub rot: [[i64; 3]; 3],
    pub targets: Vec<(usize, CMat)>,
}

impl Twist {
    pub fn new(grid: &Grid, rep: &Representation) -> Result<Self, HiggsError> {
        if rep.presentation.name != grid.presentation.name {
            return Err(HiggsError::TwistMismatch { expected: grid.presentation.name.clone(), found: rep.presentation.name.clone() });
        }
        let lat = rep.lattice_images();
        let lattice = [lat[0].clone(), lat[1].clone(), lat[2].clone()];
        let lattice_inv = lattice.clone().map(|m| linalg::inverse(&m).expect("unit determinant"));
        let p = &grid.presentation;
        let n = grid.n as i64;
        let mut deck = Vec::new();
        for el in p.holonomy_elements() {
            let aff = p.eval(&el.lift).expect("valid lift");
            let rho_g = rep.eval(&el.lift);
            let mut targets = Vec::with_capacity(grid.len());
            for v in 0..grid.len() {
                let c = grid.coords(v);
                let x: QVec3 = [0, 1, 2].map(|k| crate::platycosm::q(c[k] as i64, n));
                let gx = aff.apply(&x);
                let mut yc = [0usize; 3];
                let mut t = [0i64; 3];
                for k in 0..3 {
                    let scaled = gx[k] * qi(n);
                    debug_assert!(scaled.is_integer());
                    let s = scaled.to_integer();
                    yc[k] = s.rem_euclid(n) as usize;
                    t[k] = s.div_euclid(n);
                }
                let mut m = rho_g.clone();
                for k in 0..3 {
                    let step = if t[k] > 0 { &lattice_inv[k] } else { &lattice[k] };
                    for _ in 0..t[k].abs() {
                        m = step * m;
                    }
                }
                targets.push((grid.index(yc), m));
            }
            deck.push(DeckMap { rot: el.rot, targets });
        }
        Ok(Twist { lattice, lattice_inv, deck })
    }

    fn metric_across(&self, k: &CMat, d: usize, wrap: i32) -> CMat {
        match wrap {
            0 => k.clone(),
            1 => &self.lattice[d] * k * self.lattice[d].adjoint(),
            _ => &self.lattice_inv[d] * k * self.lattice_inv[d].adjoint(),
        }
    }

    fn endo_across(&self, m: &CMat, d: usize, wrap: i32) -> CMat {
        match wrap {
            0 => m.clone(),
            1 => &self.lattice[d] * m * &self.lattice_inv[d],
            _ => &self.lattice_inv[d] * m * &self.lattice[d],
        }
    }
}

/// θ₁, θ₂, θ₃ per vertex, stored vertex-major (`comps[3v + i]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiggsField {
    pub grid: Grid,
    #[serde(with = "cmat_serde::vec")]
    pub comps: Vec<CMat>,
    pub twist: Representation,
}

impl HiggsField {
    pub fn new(grid: Grid, twist: Representation, f: impl Fn([f64; 3]) -> [CMat; 3]) -> Self {
        let mut comps = Vec::with_capacity(3 * grid.len());
        for v in 0..grid.len() {
            comps.extend(f(grid.point(v)));
        }
        HiggsField { grid, comps, twist }
    }

    pub fn theta(&self, v: usize, i: usize) -> &CMat {
        &self.comps[3 * v + i]
    }

    pub fn n(&self) -> usize {
        self.comps[0].nrows()
    }

    pub fn max_trace(&self) -> f64 {
        self.comps.iter().map(|m| linalg::trace(m).norm()).fold(0.0, f64::max)
    }

    /// Twist consistency under the full deck group:
    /// `θ_k(g·x) = ρ(g) Σ_l (R⁻ᵀ)_{kl} θ_l(x) ρ(g)⁻¹`.
    pub fn twist_residual(&self) -> Result<f64, HiggsError> {
        let tw = Twist::new(&self.grid, &self.twist)?;
        let mut worst: f64 = 0.0;
        for dm in &tw.deck {
            let r = crate::platycosm::transpose(&crate::platycosm::mat_inv(&dm.rot));
            for (x, (y, t)) in dm.targets.iter().enumerate() {
                let ti = linalg::inverse(t).expect("invertible");
                for k in 0..3 {
                    let mut mixed = CMat::zeros(self.n(), self.n());
                    for l in 0..3 {
                        if r[k][l] != 0 {
                            mixed += self.theta(x, l) * c64(r[k][l] as f64, 0.0);
                        }
                    }
                    let expected = t * mixed * &ti;
                    worst = worst.max(linalg::fro(&(expected - self.theta(*y, k))));
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSection {
    pub grid: Grid,
    #[serde(with = "cmat_serde::vec")]
    pub k: Vec<CMat>,
}

impl MetricSection {
    pub fn identity(grid: &Grid, n: usize) -> Self {
        MetricSection { grid: grid.clone(), k: vec![CMat::identity(n, n); grid.len()] }
    }

    pub fn n(&self) -> usize {
        self.k[0].nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.k.iter().map(linalg::min_eig_herm).fold(f64::INFINITY, f64::min)
    }

    pub fn det_defect(&self) -> f64 {
        self.k.iter().map(|m| (linalg::det(m) - c64(1.0, 0.0)).norm()).fold(0.0, f64::max)
    }

    /// `max ‖k(g·x) − ρ(g) k(x) ρ(g)ᴴ‖` over the deck group.
    pub fn equivariance_residual(&self, rep: &Representation) -> Result<f64, HiggsError> {
        let tw = Twist::new(&self.grid, rep)?;
        let mut worst: f64 = 0.0;
        for dm in &tw.deck {
            for (x, (y, t)) in dm.targets.iter().enumerate() {
                let expected = t * &self.k[x] * t.adjoint();
                worst = worst.max(linalg::fro(&(expected - &self.k[*y])) / linalg::fro(&self.k[*y]));
            }
        }
        Ok(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtermResidual {
    pub comm: f64,
    pub closed: f64,
}

fn centered(field: &HiggsField, tw: &Twist, v: usize, comp: usize, d: usize) -> CMat {
    let g = &field.grid;
    let (up, wu) = g.neighbor(v, d, 1);
    let (dn, wd) = g.neighbor(v, d, -1);
    let a = tw.endo_across(field.theta(up, comp), d, wu);
    let b = tw.endo_across(field.theta(dn, comp), d, wd);
    (a - b) / c64(2.0 * g.h, 0.0)
}

/// Per-vertex discrete curl `max_{i<j} ‖∂ᵢθⱼ − ∂ⱼθᵢ‖` (centered, twisted).
pub fn curl_field(theta: &HiggsField) -> Result<Vec<f64>, HiggsError> {
    let tw = Twist::new(&theta.grid, &theta.twist)?;
    Ok((0..theta.grid.len())
        .map(|v| {
            let mut worst: f64 = 0.0;
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let c = centered(theta, &tw, v, j, i) - centered(theta, &tw, v, i, j);
                worst = worst.max(linalg::max_abs(&c));
            }
            worst
        })
        .collect())
}

/// Per-vertex discrete divergence `‖Σᵢ ∂ᵢθᵢ‖`.
pub fn divergence_field(theta: &HiggsField) -> Result<Vec<f64>, HiggsError> {
    let tw = Twist::new(&theta.grid, &theta.twist)?;
    let n = theta.n();
    Ok((0..theta.grid.len())
        .map(|v| {
            let mut div = CMat::zeros(n, n);
            for i in 0..3 {
                div += centered(theta, &tw, v, i, i);
            }
            linalg::max_abs(&div)
        })
        .collect())
}

pub fn fterm_residual(theta: &HiggsField) -> Result<FtermResidual, HiggsError> {
    let mut comm: f64 = 0.0;
    for v in 0..theta.grid.len() {
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            comm = comm.max(linalg::fro(&linalg::commutator(theta.theta(v, i), theta.theta(v, j))));
        }
    }
    let closed = curl_field(theta)?.into_iter().fold(0.0, f64::max);
    Ok(FtermResidual { comm, closed })
}

pub fn dterm_residual(theta: &HiggsField, k: &MetricSection) -> Result<f64, HiggsError> {
    if theta.grid != k.grid {
        return Err(HiggsError::GridMismatch);
    }
    Ok(divergence_field(theta)?.into_iter().fold(0.0, f64::max))
}

/// Symmetric-space distance `‖log(a^{-1/2} b a^{-1/2})‖_F`.
pub fn sym_distance(a: &CMat, b: &CMat) -> f64 {
    let s = linalg::inv_sqrt_pd(a);
    let (vals, _) = linalg::herm_eig(&(&s * b * &s));
    vals.iter().map(|x| x.ln().powi(2)).sum::<f64>().sqrt()
}

/// `Log_a(b) = a^{1/2} log(a^{-1/2} b a^{-1/2}) a^{1/2}`, returned in the
/// normalized form `log(a^{-1/2} b a^{-1/2})`.
fn normalized_log(a_inv_sqrt: &CMat, b: &CMat) -> CMat {
    linalg::log_pd(&(a_inv_sqrt * b * a_inv_sqrt))
}

/// `h Σ_edges d(k_x, k_y)²`, boundary edges twisted.
pub fn energy(k: &MetricSection, rep: &Representation) -> Result<f64, HiggsError> {
    let tw = Twist::new(&k.grid, rep)?;
    Ok(energy_with(k, &tw))
}

fn energy_with(k: &MetricSection, tw: &Twist) -> f64 {
    let g = &k.grid;
    let mut total = 0.0;
    for v in 0..g.len() {
        for d in 0..3 {
            let (u, w) = g.neighbor(v, d, 1);
            let ku = tw.metric_across(&k.k[u], d, w);
            total += sym_distance(&k.k[v], &ku).powi(2);
        }
    }
    g.h * total
}

/// Riemannian gradient of the energy in normalized form:
/// `X(x) = k^{-1/2} grad k^{-1/2} = −2h Σ_{nbrs} log(k^{-1/2} k_y k^{-1/2})`.
fn normalized_gradient(k: &MetricSection, tw: &Twist) -> Vec<CMat> {
    let g = &k.grid;
    let n = k.n();
    (0..g.len())
        .map(|v| {
            let s = linalg::inv_sqrt_pd(&k.k[v]);
            let mut acc = CMat::zeros(n, n);
            for d in 0..3 {
                for sgn in [1, -1] {
                    let (u, w) = g.neighbor(v, d, sgn);
                    acc += normalized_log(&s, &tw.metric_across(&k.k[u], d, w));
                }
            }
            acc * c64(-2.0 * g.h, 0.0)
        })
        .collect()
}

/// Riemannian gradient `grad E(x) = k^{1/2} X k^{1/2}` (metric `tr(k⁻¹ A k⁻¹ B)`).
pub fn riemannian_gradient(k: &MetricSection, rep: &Representation) -> Result<Vec<CMat>, HiggsError> {
    let tw = Twist::new(&k.grid, rep)?;
    let x = normalized_gradient(k, &tw);
    Ok(x.iter()
        .zip(&k.k)
        .map(|(x, kv)| {
            let s = linalg::sqrt_pd(kv);
            &s * x * &s
        })
        .collect())
}

/// `Σ_x tr(k⁻¹ a k⁻¹ b)`.
pub fn metric_inner(k: &MetricSection, a: &[CMat], b: &[CMat]) -> f64 {
    k.k.iter()
        .zip(a.iter().zip(b))
        .map(|(kv, (x, y))| {
            let ki = linalg::inverse(kv).expect("positive definite");
            linalg::trace(&(&ki * x * &ki * y)).re
        })
        .sum()
}

/// Symmetric-space exponential `k^{1/2} exp(t k^{-1/2} X k^{-1/2}) k^{1/2}` per vertex.
pub fn retract(k: &MetricSection, dir: &[CMat], t: f64) -> MetricSection {
    let n = k.n();
    let out = k
        .k
        .iter()
        .zip(dir)
        .map(|(kv, x)| {
            let s = linalg::sqrt_pd(kv);
            let si = linalg::inv_sqrt_pd(kv);
            let inner = linalg::hermitian_part(&(&si * x * &si)) * c64(t, 0.0);
            let m = linalg::hermitian_part(&(&s * linalg::exp_herm(&inner) * &s));
            let d = linalg::det(&m).re;
            m / c64(d.powf(1.0 / n as f64), 0.0)
        })
        .collect();
    MetricSection { grid: k.grid.clone(), k: out }
}

/// Discrete tension: `max_x ‖X(x)‖_F / (2h³)`, a discrete Laplacian of `log k`.
pub fn tension(k: &MetricSection, rep: &Representation) -> Result<f64, HiggsError> {
    let tw = Twist::new(&k.grid, rep)?;
    Ok(tension_of(&normalized_gradient(k, &tw), k.grid.h))
}

fn tension_of(x: &[CMat], h: f64) -> f64 {
    x.iter().map(linalg::fro).fold(0.0, f64::max) / (2.0 * h.powi(3))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// initial Armijo step
    pub step: f64,
    /// tension tolerance
    pub tol: f64,
    /// shift in the `(σ − Δ)` preconditioner
    pub sigma: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iter: 500, step: 1.0, tol: 1e-9, sigma: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub enum Initial {
    Identity,
    /// random hermitian perturbations of size `scale`, then averaged over the deck group
    Random { scale: f64, seed_rng: rand_chacha::ChaCha8Rng },
    Given(MetricSection),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOutput {
    pub k: MetricSection,
    pub energy: f64,
    pub tension: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Per-vertex Karcher mean of the deck-group translates of `k`.
pub fn symmetrize_metric(k: &MetricSection, tw: &Twist) -> MetricSection {
    if tw.deck.len() == 1 {
        return k.clone();
    }
    let g = &k.grid;
    let n = k.n();
    let mut pushed: Vec<Vec<CMat>> = vec![Vec::with_capacity(tw.deck.len()); g.len()];
    for dm in &tw.deck {
        for (x, (y, t)) in dm.targets.iter().enumerate() {
            pushed[*y].push(t * &k.k[x] * t.adjoint());
        }
    }
    let out = pushed
        .iter()
        .map(|pts| {
            let mut m = pts[0].clone();
            for _ in 0..100 {
                let s = linalg::sqrt_pd(&m);
                let si = linalg::inv_sqrt_pd(&m);
                let mut step = CMat::zeros(n, n);
                for p in pts {
                    step += normalized_log(&si, p);
                }
                step /= c64(pts.len() as f64, 0.0);
                m = linalg::hermitian_part(&(&s * linalg::exp_herm(&step) * &s));
                if linalg::fro(&step) < 1e-15 {
                    break;
                }
            }
            let d = linalg::det(&m).re;
            m / c64(d.powf(1.0 / n as f64), 0.0)
        })
        .collect();
    MetricSection { grid: g.clone(), k: out }
}

// Average a tangent field at an equivariant k over the deck group.
fn symmetrize_tangent(dir: &[CMat], tw: &Twist) -> Vec<CMat> {
    if tw.deck.len() == 1 {
        return dir.to_vec();
    }
    let n = dir[0].nrows();
    let mut out = vec![CMat::zeros(n, n); dir.len()];
    for dm in &tw.deck {
        for (x, (y, t)) in dm.targets.iter().enumerate() {
            out[*y] += t * &dir[x] * t.adjoint();
        }
    }
    let m = c64(tw.deck.len() as f64, 0.0);
    out.iter().map(|x| linalg::hermitian_part(&(x / m))).collect()
}

// Solve (σ − Δ_h) y = b entrywise with periodic untwisted Laplacian by CG.
fn precondition(grid: &Grid, x: &[CMat], sigma: f64) -> Vec<CMat> {
    let n = x[0].nrows();
    let len = grid.len();
    let h2 = grid.h * grid.h;
    let nbrs: Vec<[usize; 6]> = (0..len)
        .map(|v| {
            let mut a = [0; 6];
            for d in 0..3 {
                a[2 * d] = grid.neighbor(v, d, 1).0;
                a[2 * d + 1] = grid.neighbor(v, d, -1).0;
            }
            a
        })
        .collect();
    let apply = |y: &[Complex64]| -> Vec<Complex64> {
        (0..len)
            .map(|v| {
                let s: Complex64 = nbrs[v].iter().map(|u| y[*u]).sum();
                y[v] * (sigma + 6.0 / h2) - s / h2
            })
            .collect()
    };
    let dot = |a: &[Complex64], b: &[Complex64]| -> f64 { a.iter().zip(b).map(|(p, q)| (p.conj() * q).re).sum() };
    let mut out = vec![CMat::zeros(n, n); len];
    for i in 0..n {
        for j in 0..n {
            let b: Vec<Complex64> = x.iter().map(|m| m[(i, j)]).collect();
            let bb = dot(&b, &b);
            if bb == 0.0 {
                continue;
            }
            let mut y = vec![c64(0.0, 0.0); len];
            let mut r = b.clone();
            let mut p = r.clone();
            let mut rr = bb;
            for _ in 0..500 {
                let ap = apply(&p);
                let alpha = rr / dot(&p, &ap);
                for v in 0..len {
                    y[v] += p[v] * alpha;
                    r[v] -= ap[v] * alpha;
                }
                let rr_new = dot(&r, &r);
                if rr_new <= 1e-28 * bb {
                    break;
                }
                let beta = rr_new / rr;
                for v in 0..len {
                    p[v] = r[v] + p[v] * beta;
                }
                rr = rr_new;
            }
            for v in 0..len {
                out[v][(i, j)] = y[v];
            }
        }
    }
    out
}

/// Minimize the energy over deck-equivariant metrics by preconditioned
/// Riemannian gradient descent with Armijo backtracking.
pub fn harmonic_metric_solve(rep: &Representation, grid: &Grid, opts: &SolveOptions, init: Initial) -> Result<SolveOutput, HiggsError> {
    let tw = Twist::new(grid, rep)?;
    let n = rep.n();
    let start = match init {
        Initial::Identity => MetricSection::identity(grid, n),
        Initial::Random { scale, mut seed_rng } => {
            let k = (0..grid.len())
                .map(|_| {
                    let g = crate::rng::gaussian_matrix(&mut seed_rng, n);
                    let mut hm = linalg::hermitian_part(&g) * c64(scale, 0.0);
                    let tr = linalg::trace(&hm) / c64(n as f64, 0.0);
                    for i in 0..n {
                        hm[(i, i)] -= tr;
                    }
                    linalg::exp_herm(&hm)
                })
                .collect();
            MetricSection { grid: grid.clone(), k }
        }
        Initial::Given(k) => {
            if k.grid != *grid {
                return Err(HiggsError::GridMismatch);
            }
            k
        }
    };
    let mut k = symmetrize_metric(&start, &tw);
    let mut e = energy_with(&k, &tw);
    let mut trace = Vec::new();
    let h3 = grid.h.powi(3);
    for iter in 0..opts.max_iter {
        let x = normalized_gradient(&k, &tw);
        let tens = tension_of(&x, grid.h);
        trace.push(TraceRow { iter, energy: e, grad_norm: tens });
        if !e.is_finite() {
            return Err(HiggsError::DivergentEnergy(iter));
        }
        if tens <= opts.tol {
            return Ok(SolveOutput { k, energy: e, tension: tens, iterations: iter, trace });
        }
        let y = precondition(grid, &x, opts.sigma);
        let dir: Vec<CMat> = y
            .iter()
            .zip(&k.k)
            .map(|(y, kv)| {
                let s = linalg::sqrt_pd(kv);
                -(&s * y * &s) / c64(2.0 * h3, 0.0)
            })
            .collect();
        let dir = symmetrize_tangent(&dir, &tw);
        // ⟨grad, dir⟩ in the normalized frame
        let slope: f64 = x
            .iter()
            .zip(dir.iter().zip(&k.k))
            .map(|(xv, (dv, kv))| {
                let si = linalg::inv_sqrt_pd(kv);
                linalg::trace(&(xv * (&si * dv * &si))).re
            })
            .sum();
        if slope >= 0.0 {
            return Err(HiggsError::NotConverged { iterations: iter, tension: tens });
        }
        // below this the energy cannot resolve a decrease, and the step is judged by the tension
        let noise = 1e-13 * e.abs().max(1.0);
        let mut t = opts.step;
        let mut accepted = None;
        while t > 1e-12 {
            let cand = retract(&k, &dir, t);
            let ec = energy_with(&cand, &tw);
            if ec.is_finite() && ec <= e + 1e-4 * t * slope {
                accepted = Some((cand, ec));
                break;
            }
            if ec.is_finite() && ec <= e + noise && tension_of(&normalized_gradient(&cand, &tw), grid.h) < tens {
                accepted = Some((cand, ec));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, ec)) => {
                k = cand;
                e = ec;
            }
            None => return Err(HiggsError::NotConverged { iterations: iter, tension: tens }),
        }
    }
    let tens = tension_of(&normalized_gradient(&k, &tw), grid.h);
    if tens <= opts.tol {
        return Ok(SolveOutput { k, energy: e, tension: tens, iterations: opts.max_iter, trace });
    }
    Err(HiggsError::NotConverged { iterations: opts.max_iter, tension: tens })
}

/// Conjugate so that `k` at the origin is diagonal in its own eigenbasis
/// (ascending). Returns the gauge-fixed section and the unitary `g` used
/// (`k' = g k gᴴ`).
pub fn gauge_fix(k: &MetricSection) -> (MetricSection, CMat) {
    let (_, v) = linalg::herm_eig(&k.k[0]);
    let g = v.adjoint();
    let out = k.k.iter().map(|m| linalg::hermitian_part(&(&g * m * g.adjoint()))).collect();
    (MetricSection { grid: k.grid.clone(), k: out }, g)
}

/// `θᵢ = ½ ∂ᵢk·k⁻¹`, discretized through symmetric-space logarithms:
/// `θᵢ = k^{1/2} Mᵢ k^{-1/2}` with `Mᵢ = (ℓ₊ − ℓ₋)/(4h)`, `ℓ± = log(k^{-1/2} k(x ± heᵢ) k^{-1/2})`.
pub fn theta_from_metric(k: &MetricSection, rep: &Representation) -> Result<HiggsField, HiggsError> {
    let tw = Twist::new(&k.grid, rep)?;
    let g = &k.grid;
    let mut comps = Vec::with_capacity(3 * g.len());
    for v in 0..g.len() {
        let s = linalg::sqrt_pd(&k.k[v]);
        let si = linalg::inv_sqrt_pd(&k.k[v]);
        for d in 0..3 {
            let (u, wu) = g.neighbor(v, d, 1);
            let (l, wl) = g.neighbor(v, d, -1);
            let lp = normalized_log(&si, &tw.metric_across(&k.k[u], d, wu));
            let lm = normalized_log(&si, &tw.metric_across(&k.k[l], d, wl));
            let m = (lp - lm) / c64(4.0 * g.h, 0.0);
            comps.push(&s * m * &si);
        }
    }
    Ok(HiggsField { grid: g.clone(), comps, twist: rep.clone() })
}

/// The flat connection `d` split against a metric: in the unitary frame
/// `s' = k^{-1/2} s` every edge transport factors as `U·P` with `U` unitary
/// (the connection `A`) and `P` positive (the Higgs part), and the lattice
/// twist becomes unitary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectionSplit {
    pub theta: HiggsField,
    /// unitary factor of the edge transport `x → x + heᵢ`, index `3v + i`
    #[serde(with = "cmat_serde::vec")]
    pub edge_unitary: Vec<CMat>,
    #[serde(with = "cmat_serde::vec")]
    pub edge_positive: Vec<CMat>,
    /// `k^{1/2}` at the origin, to return to the flat frame
    #[serde(with = "cmat_serde")]
    pub origin_frame: CMat,
    pub unitary_defect: f64,
}

pub fn decompose_connection(rep: &Representation, k: &MetricSection) -> Result<ConnectionSplit, HiggsError> {
    let theta = theta_from_metric(k, rep)?;
    let tw = Twist::new(&k.grid, rep)?;
    let g = &k.grid;
    let mut edge_unitary = Vec::with_capacity(3 * g.len());
    let mut edge_positive = Vec::with_capacity(3 * g.len());
    let mut defect: f64 = 0.0;
    for v in 0..g.len() {
        let sv = linalg::sqrt_pd(&k.k[v]);
        for d in 0..3 {
            let (u, w) = g.neighbor(v, d, 1);
            // flat transport to the stored representative of the neighbour
            let back = match w {
                0 => CMat::identity(rep.n(), rep.n()),
                _ => tw.lattice_inv[d].clone(),
            };
            let t = linalg::inv_sqrt_pd(&k.k[u]) * back * &sv;
            let p = linalg::sqrt_pd(&(t.adjoint() * &t));
            let un = &t * linalg::inverse(&p).expect("invertible transport");
            defect = defect.max(linalg::fro(&(un.adjoint() * &un - CMat::identity(rep.n(), rep.n()))));
            edge_unitary.push(un);
            edge_positive.push(p);
        }
    }
    Ok(ConnectionSplit { theta, edge_unitary, edge_positive, origin_frame: linalg::sqrt_pd(&k.k[0]), unitary_defect: defect })
}

/// Monodromy of `A + θ` around the three lattice loops through the origin,
/// returned in the flat frame; equals `ρ(eᵢ)`.
pub fn reassembled_monodromy(split: &ConnectionSplit) -> Vec<CMat> {
    let g = &split.theta.grid;
    let n = split.origin_frame.nrows();
    let si = linalg::inverse(&split.origin_frame).expect("positive");
    (0..3)
        .map(|d| {
            let mut acc = CMat::identity(n, n);
            let mut v = 0;
            for _ in 0..g.n {
                let e = 3 * v + d;
                acc = &split.edge_unitary[e] * &split.edge_positive[e] * acc;
                v = g.neighbor(v, d, 1).0;
            }
            // acc = k(0)^{-1/2} ρ(e)⁻¹ k(0)^{1/2}
            let inv = linalg::inverse(&acc).expect("invertible");
            &split.origin_frame * inv * &si
        })
        .collect()
}

/// Independent solver runs (parameter sweeps) on a bounded thread pool.
/// `PLATYCOSM_HIGGS_THREADS` caps the pool size.
pub fn solve_many(jobs: &[(Representation, Grid)], opts: &SolveOptions) -> Vec<Result<SolveOutput, HiggsError>> {
    use rayon::prelude::*;
    let threads = std::env::var("PLATYCOSM_HIGGS_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(|| jobs.par_iter().map(|(rep, grid)| harmonic_metric_solve(rep, grid, opts, Initial::Identity)).collect())
}

/// Random tangent field (hermitian, `tr(k⁻¹X) = 0`) at `k`.
pub fn random_tangent<R: Rng>(k: &MetricSection, rng: &mut R) -> Vec<CMat> {
    let n = k.n();
    k.k.iter()
        .map(|kv| {
            let g = crate::rng::gaussian_matrix(rng, n);
            let mut hm = linalg::hermitian_part(&g);
            let tr = linalg::trace(&hm) / c64(n as f64, 0.0);
            for i in 0..n {
                hm[(i, i)] -= tr;
            }
            let s = linalg::sqrt_pd(kv);
            &s * hm * &s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platycosm::presentation;
    use crate::rng::SeedStream;

    fn g1_diag(lams: [Complex64; 3]) -> Representation {
        let p = presentation("G1").unwrap();
        let images = lams.iter().map(|l| linalg::from_diag(&[*l, l.inv()])).collect();
        Representation::new(p, images).unwrap()
    }

    #[test]
    fn neighbors_wrap() {
        let g = Grid::new(&presentation("G1").unwrap(), 4).unwrap();
        assert_eq!(g.neighbor(g.index([3, 1, 2]), 0, 1), (g.index([0, 1, 2]), 1));
        assert_eq!(g.neighbor(g.index([0, 1, 2]), 0, -1), (g.index([3, 1, 2]), -1));
        assert!(Grid::new(&presentation("G3").unwrap(), 6).is_err());
        assert!(Grid::new(&presentation("G6").unwrap(), 5).is_err());
    }

    #[test]
    fn diagonal_energy_is_exact() {
        let a = 2f64.ln();
        let rep = g1_diag([c64(2.0, 0.0), c64(0.0, 1.0), c64(1.0, 0.0)]);
        let g = Grid::new(&rep.presentation, 6).unwrap();
        let k = MetricSection {
            grid: g.clone(),
            k: (0..g.len()).map(|v| linalg::from_real_diag(&[(2.0 * a * g.point(v)[0]).exp(), (-2.0 * a * g.point(v)[0]).exp()])).collect(),
        };
        let e = energy(&k, &rep).unwrap();
        assert!((e - 8.0 * a * a).abs() < 1e-12);
        assert!(tension(&k, &rep).unwrap() < 1e-9);
        // gauge invariance under constant g in the centralizer
        let c = linalg::from_real_diag(&[1.7, 1.0 / 1.7]);
        let moved = MetricSection { grid: g.clone(), k: k.k.iter().map(|m| &c * m * &c).collect() };
        assert!((energy(&moved, &rep).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn unitary_twist_gives_identity() {
        let rep = g1_diag([c64(0.0, 1.0), c64(0.6, 0.8), c64(1.0, 0.0)]);
        let g = Grid::new(&rep.presentation, 4).unwrap();
        let out = harmonic_metric_solve(&rep, &g, &SolveOptions::default(), Initial::Identity).unwrap();
        assert_eq!(out.energy, 0.0);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = presentation("G6").unwrap();
        let c = crate::char_variety::TorusClass::sl2([c64(1.8, 0.4), c64(-1.0, 0.0), c64(-1.0, 0.0)]);
        let rep = crate::char_variety::lift_representation(&p, &c).unwrap();
        let g = Grid::new(&p, 4).unwrap();
        let mut rng = SeedStream::new(11).fork("fd");
        let base = MetricSection { grid: g.clone(), k: random_tangent(&MetricSection::identity(&g, 2), &mut rng).iter().map(|x| linalg::exp_herm(&(x * c64(0.3, 0.0)))).collect() };
        let grad = riemannian_gradient(&base, &rep).unwrap();
        for _ in 0..5 {
            let dir = random_tangent(&base, &mut rng);
            let t = 1e-5;
            let fd = (energy(&retract(&base, &dir, t), &rep).unwrap() - energy(&retract(&base, &dir, -t), &rep).unwrap()) / (2.0 * t);
            let an = metric_inner(&base, &grad, &dir);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "fd {fd} analytic {an}");
        }
    }

    #[test]
    fn solver_recovers_diagonal_oracle() {
        let a = 2f64.ln();
        let rep = g1_diag([c64(2.0, 0.0), c64(0.0, 1.0), c64(1.0, 0.0)]);
        let g = Grid::new(&rep.presentation, 8).unwrap();
        let out = harmonic_metric_solve(&rep, &g, &SolveOptions::default(), Initial::Identity).unwrap();
        let c = out.k.k[0][(0, 0)].re;
        for v in 0..g.len() {
            let x = g.point(v)[0];
            let oracle = linalg::from_real_diag(&[c * (2.0 * a * x).exp(), (-2.0 * a * x).exp() / c]);
            assert!(linalg::max_abs(&(&out.k.k[v] - oracle)) < 1e-8);
        }
        let theta = theta_from_metric(&out.k, &rep).unwrap();
        let expected = linalg::from_real_diag(&[a, -a]);
        for v in 0..g.len() {
            assert!(linalg::max_abs(&(theta.theta(v, 0) - &expected)) < 1e-8);
            assert!(linalg::max_abs(theta.theta(v, 1)) < 1e-8);
        }
        let f = fterm_residual(&theta).unwrap();
        assert!(f.comm < 1e-8 && f.closed < 1e-8);
        assert!(dterm_residual(&theta, &out.k).unwrap() < 1e-7);
        let split = decompose_connection(&rep, &out.k).unwrap();
        let mono = reassembled_monodromy(&split);
        for (m, l) in mono.iter().zip(rep.lattice_images()) {
            assert!(linalg::max_abs(&(m - l)) < 1e-8);
        }
    }

    #[test]
    fn g6_line_solution_is_unique_and_harmonic() {
        let p = presentation("G6").unwrap();
        let z = c64(1.5, 0.9);
        let c = crate::char_variety::TorusClass::sl2([z, c64(-1.0, 0.0), c64(-1.0, 0.0)]);
        let rep = crate::char_variety::lift_representation(&p, &c).unwrap();
        let g = Grid::new(&p, 4).unwrap();
        let opts = SolveOptions::default();
        let base = harmonic_metric_solve(&rep, &g, &opts, Initial::Identity).unwrap();
        assert!(base.k.equivariance_residual(&rep).unwrap() < 1e-10);
        let theta = theta_from_metric(&base.k, &rep).unwrap();
        assert!(dterm_residual(&theta, &base.k).unwrap() < 1e-7);
        assert!(theta.twist_residual().unwrap() < 1e-8);
        let a = z.norm().ln();
        let eig = crate::linalg::herm_eig(theta.theta(0, 0)).0;
        assert!((eig[1] - a.abs()).abs() < 1e-8);
        let seeds = SeedStream::new(2);
        for i in 0..2 {
            let init = Initial::Random { scale: 0.4, seed_rng: seeds.fork(&format!("init-{i}")) };
            let other = harmonic_metric_solve(&rep, &g, &opts, init).unwrap();
            let d = base.k.k.iter().zip(&other.k.k).map(|(x, y)| linalg::max_abs(&(x - y))).fold(0.0, f64::max);
            assert!(d < 1e-6, "runs differ by {d}");
        }
    }

    #[test]
    fn residual_examples() {
        let rep = g1_diag([c64(1.0, 0.0); 3]);
        let g = Grid::new(&rep.presentation, 8).unwrap();
        let constant = HiggsField::new(g.clone(), rep.clone(), |_| {
            [linalg::from_real_diag(&[0.3, -0.3]), linalg::from_real_diag(&[-0.1, 0.1]), linalg::from_real_diag(&[0.7, -0.7])]
        });
        let f = fterm_residual(&constant).unwrap();
        assert_eq!(f.comm, 0.0);
        assert!(f.closed <= 1e-14);
        let k = MetricSection::identity(&g, 2);
        assert!(dterm_residual(&constant, &k).unwrap() <= 1e-14);
        let s1 = linalg::from_rows(2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)]);
        let s3 = linalg::from_real_diag(&[1.0, -1.0]);
        let nc = HiggsField::new(g.clone(), rep.clone(), |_| [s1.clone(), s3.clone(), CMat::zeros(2, 2)]);
        let f = fterm_residual(&nc).unwrap();
        assert!((f.comm - linalg::fro(&linalg::commutator(&s1, &s3))).abs() < 1e-14);
        // linear field: unit divergence away from the wraparound
        let lin = HiggsField::new(g.clone(), rep.clone(), |x| [s3.clone() * c64(x[0], 0.0), CMat::zeros(2, 2), CMat::zeros(2, 2)]);
        let div = divergence_field(&lin).unwrap();
        for v in (0..g.len()).filter(|v| g.is_interior(*v)) {
            assert!((div[v] - 1.0).abs() < 1e-12);
        }
        // (x₂, 0, 0)-type field has unit curl
        let rot = HiggsField::new(g.clone(), rep, |x| [s3.clone() * c64(x[1], 0.0), CMat::zeros(2, 2), CMat::zeros(2, 2)]);
        let curl = curl_field(&rot).unwrap();
        for v in (0..g.len()).filter(|v| g.is_interior(*v)) {
            assert!((curl[v] - 1.0).abs() < 1e-12);
        }
    }
}
