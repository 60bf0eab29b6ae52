//! The A1 hyperkähler quotient `H² /// U(1)`.
//!
//! A quaternion is `q = z + w·j` with `z, w ∈ C`, stored as `(Re z, Im z, Re w, Im w)`.
//! U(1) acts by `(q₁, q₂) ↦ (q₁e^{iθ}, q₂e^{−iθ})`, i.e. with weight +1 on
//! `z₁, w₂` and weight −1 on `w₁, z₂`. The moment map is
//! `μ₁ = ½(|z₁|² − |w₁|² − |z₂|² + |w₂|²)`, `μ₂ + iμ₃ = z₁w₁ − z₂w₂`.

use crate::rng::normal;
use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AleError {
    #[error("Newton iteration produced {found} of {wanted} points within the retry budget")]
    NewtonFailed { found: usize, wanted: usize },
    #[error("count must be at least 1")]
    EmptyRequest,
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
}

pub const NEWTON_ITERATIONS: usize = 50;
pub const NEWTON_RETRIES: usize = 20;
pub const LEVEL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuatPair {
    pub q1: [f64; 4],
    pub q2: [f64; 4],
}

/// Hamilton product on `(1, i, j, k)` components.
pub fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

impl QuatPair {
    pub fn new(q1: [f64; 4], q2: [f64; 4]) -> Self {
        debug_assert_eq!(quat_mul(&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]), [0.0, 0.0, 0.0, 1.0]);
        QuatPair { q1, q2 }
    }

    pub fn origin() -> Self {
        QuatPair { q1: [0.0; 4], q2: [0.0; 4] }
    }

    pub fn from_vec(x: &[f64; 8]) -> Self {
        QuatPair { q1: [x[0], x[1], x[2], x[3]], q2: [x[4], x[5], x[6], x[7]] }
    }

    pub fn to_vec(&self) -> [f64; 8] {
        [self.q1[0], self.q1[1], self.q1[2], self.q1[3], self.q2[0], self.q2[1], self.q2[2], self.q2[3]]
    }

    /// `(z₁, w₁, z₂, w₂)`
    pub fn complex(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.q1[0], self.q1[1]),
            Complex64::new(self.q1[2], self.q1[3]),
            Complex64::new(self.q2[0], self.q2[1]),
            Complex64::new(self.q2[2], self.q2[3]),
        ]
    }

    /// `(q₁e^{iθ}, q₂e^{−iθ})` by right quaternion multiplication.
    pub fn act(&self, theta: f64) -> Self {
        let e = [theta.cos(), theta.sin(), 0.0, 0.0];
        let ebar = [theta.cos(), -theta.sin(), 0.0, 0.0];
        // storage (Re z, Im z, Re w, Im w) is already the (1, i, j, k) expansion of z + w·j
        QuatPair { q1: quat_mul(&self.q1, &e), q2: quat_mul(&self.q2, &ebar) }
    }

    pub fn scale(&self, t: f64) -> Self {
        QuatPair { q1: self.q1.map(|x| x * t), q2: self.q2.map(|x| x * t) }
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `ξ = (χ₁, χ₂, χ₃)`; the complex part is `χ_c = χ₂ + iχ₃`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParameter {
    pub xi: [f64; 3],
}

impl SmoothingParameter {
    pub fn new(xi: [f64; 3]) -> Self {
        SmoothingParameter { xi }
    }

    pub fn chi_c(&self) -> Complex64 {
        Complex64::new(self.xi[1], self.xi[2])
    }

    /// The A1 root hyperplane `Δ ⊗ R³` is the origin.
    pub fn is_generic(&self) -> bool {
        self.xi.iter().any(|x| *x != 0.0)
    }
}

pub fn moment_map(p: &QuatPair) -> [f64; 3] {
    let [z1, w1, z2, w2] = p.complex();
    let real = 0.5 * (z1.norm_sqr() - w1.norm_sqr() - z2.norm_sqr() + w2.norm_sqr());
    let c = z1 * w1 - z2 * w2;
    [real, c.re, c.im]
}

fn jacobian(p: &QuatPair) -> SMatrix<f64, 3, 8> {
    let [z1, w1, z2, w2] = p.complex();
    let x = p.to_vec();
    let mut j = SMatrix::<f64, 3, 8>::zeros();
    let weights = [1.0, -1.0, -1.0, 1.0];
    for k in 0..4 {
        j[(0, 2 * k)] = weights[k] * x[2 * k];
        j[(0, 2 * k + 1)] = weights[k] * x[2 * k + 1];
    }
    // ∂(z₁w₁ − z₂w₂) along Re and Im of each coordinate
    let partner = [(w1, 1.0), (z1, 1.0), (w2, -1.0), (z2, -1.0)];
    for (k, (other, s)) in partner.into_iter().enumerate() {
        let d_re = other * s;
        let d_im = other * Complex64::i() * s;
        j[(1, 2 * k)] = d_re.re;
        j[(2, 2 * k)] = d_re.im;
        j[(1, 2 * k + 1)] = d_im.re;
        j[(2, 2 * k + 1)] = d_im.im;
    }
    j
}

fn residual(p: &QuatPair, xi: &SmoothingParameter) -> f64 {
    let m = moment_map(p);
    (0..3).map(|i| (m[i] - xi.xi[i]).powi(2)).sum::<f64>().sqrt()
}

/// Minimum-norm Gauss–Newton from one seed.
pub fn newton(seed: QuatPair, xi: &SmoothingParameter) -> Option<QuatPair> {
    let mut x = SVector::<f64, 8>::from_row_slice(&seed.to_vec());
    for _ in 0..NEWTON_ITERATIONS {
        let p = QuatPair::from_vec(&x.as_slice().try_into().expect("eight entries"));
        let m = moment_map(&p);
        let f = SVector::<f64, 3>::from_fn(|i, _| m[i] - xi.xi[i]);
        if f.norm() <= 1e-14 * (1.0 + p.norm().powi(2)) {
            return Some(p);
        }
        let j = jacobian(&p);
        let jjt = j * j.transpose();
        let step = j.transpose() * (jjt.try_inverse()? * f);
        x -= step;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    let p = QuatPair::from_vec(&x.as_slice().try_into().expect("eight entries"));
    (residual(&p, xi) <= LEVEL_TOL).then_some(p)
}

fn gaussian_seed<R: Rng>(rng: &mut R) -> QuatPair {
    let mut x = [0.0; 8];
    for v in x.iter_mut() {
        *v = normal(rng);
    }
    QuatPair::from_vec(&x)
}

/// `count` points of `μ⁻¹(ξ)` from unit-Gaussian seeds, each verified by
/// re-evaluating the moment map.
pub fn solve_level_set<R: Rng>(xi: &SmoothingParameter, count: usize, rng: &mut R) -> Result<Vec<QuatPair>, AleError> {
    if count == 0 {
        return Err(AleError::EmptyRequest);
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut found = None;
        for _ in 0..NEWTON_RETRIES {
            if let Some(p) = newton(gaussian_seed(rng), xi) {
                if residual(&p, xi) <= LEVEL_TOL {
                    found = Some(p);
                    break;
                }
            }
        }
        match found {
            Some(p) => out.push(p),
            None => return Err(AleError::NewtonFailed { found: out.len(), wanted: count }),
        }
    }
    Ok(out)
}

/// Generators of the C*-invariant ring: `u = z₁z₂`, `v = w₁w₂`,
/// `w = ½(z₁w₁ + z₂w₂)`. They satisfy `uv − w² = −¼ μ_C²`.
pub fn complex_invariants(p: &QuatPair) -> (Complex64, Complex64, Complex64) {
    let [z1, w1, z2, w2] = p.complex();
    (z1 * z2, w1 * w2, (z1 * w1 + z2 * w2) * 0.5)
}

pub fn a1_defect(p: &QuatPair) -> Complex64 {
    let (u, v, w) = complex_invariants(p);
    u * v - w * w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Freeness {
    pub free: bool,
    /// a point of `μ⁻¹(ξ)` with nontrivial stabilizer, when one exists
    pub witness: Option<QuatPair>,
}

/// Every coordinate has weight ±1, so only the origin has a nontrivial
/// stabilizer, and it lies on `μ⁻¹(ξ)` exactly when `ξ = 0`.
pub fn freeness_check(xi: &SmoothingParameter) -> Freeness {
    let origin = QuatPair::origin();
    let on_level = moment_map(&origin) == xi.xi;
    Freeness { free: !on_level, witness: on_level.then_some(origin) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SphereType {
    Real,
    Imaginary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingModel {
    pub eps: f64,
    pub sign: i32,
    pub sphere_type: SphereType,
    pub radius: f64,
    /// max `|Σzᵢ² − sign·ε|` over the sphere samples
    pub sphere_residual: f64,
    /// max distance between a sphere point and its image under the involution
    pub involution_defect: f64,
    /// max quadric residual over generic quadric samples
    pub quadric_residual: f64,
    /// generic quadric points fixed by the involution that are off the sphere
    pub stray_fixed_points: usize,
    #[serde(with = "crate::linalg::complex_serde")]
    pub sphere_samples: Vec<Vec<Complex64>>,
}

/// The quadric `z₁² + z₂² + z₃² = sign·ε` and its vanishing sphere: the real
/// sphere (fixed by `z ↦ z̄`) for `+ε`, the imaginary one (fixed by `z ↦ −z̄`) for `−ε`.
pub fn smoothing_models<R: Rng>(eps: f64, sign: i32, samples: usize, rng: &mut R) -> Result<SmoothingModel, AleError> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(AleError::BadEps(eps));
    }
    let s = if sign >= 0 { 1.0 } else { -1.0 };
    let target = s * eps;
    let sphere_type = if s > 0.0 { SphereType::Real } else { SphereType::Imaginary };
    let involution = |z: &[Complex64]| -> Vec<Complex64> { z.iter().map(|x| if s > 0.0 { x.conj() } else { -x.conj() }).collect() };
    let radius = eps.sqrt();
    let mut sphere_samples = Vec::with_capacity(samples);
    let (mut sphere_residual, mut involution_defect): (f64, f64) = (0.0, 0.0);
    for _ in 0..samples {
        let d = [normal(rng), normal(rng), normal(rng)];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let z: Vec<Complex64> = d
            .iter()
            .map(|x| {
                let r = x / len * radius;
                if s > 0.0 {
                    Complex64::new(r, 0.0)
                } else {
                    Complex64::new(0.0, r)
                }
            })
            .collect();
        let q: Complex64 = z.iter().map(|x| x * x).sum();
        sphere_residual = sphere_residual.max((q - target).norm());
        let moved = involution(&z);
        involution_defect = involution_defect.max(z.iter().zip(&moved).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        sphere_samples.push(z);
    }
    let (mut quadric_residual, mut stray): (f64, usize) = (0.0, 0);
    for _ in 0..samples {
        let z1 = Complex64::new(normal(rng), normal(rng));
        let z2 = Complex64::new(normal(rng), normal(rng));
        let z3 = (Complex64::new(target, 0.0) - z1 * z1 - z2 * z2).sqrt();
        let z = [z1, z2, z3];
        let q: Complex64 = z.iter().map(|x| x * x).sum();
        quadric_residual = quadric_residual.max((q - target).norm() / (1.0 + z.iter().map(|x| x.norm_sqr()).sum::<f64>()));
        let moved = involution(&z);
        let fixed = z.iter().zip(&moved).all(|(a, b)| (a - b).norm() <= 1e-12);
        let on_sphere = (z.iter().map(|x| x.norm_sqr()).sum::<f64>() - eps).abs() <= 1e-9;
        if fixed && !on_sphere {
            stray += 1;
        }
    }
    Ok(SmoothingModel { eps, sign: s as i32, sphere_type, radius, sphere_residual, involution_defect, quadric_residual, stray_fixed_points: stray, sphere_samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `c` in `uv − w² = c·χ_c²`, one value per `χ_c`
    pub per_chi: Vec<(f64, f64, f64)>,
    pub c: f64,
    pub spread: f64,
    pub max_level_residual: f64,
}

/// Measure the constant of the deformed A1 equation on fresh level-set samples
/// for each `χ_c`.
pub fn calibrate<R: Rng>(chis: &[Complex64], per_chi: usize, rng: &mut R) -> Result<Calibration, AleError> {
    let mut rows = Vec::new();
    let mut worst_level: f64 = 0.0;
    for chi in chis {
        let xi = SmoothingParameter::new([0.0, chi.re, chi.im]);
        let pts = solve_level_set(&xi, per_chi, rng)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for p in &pts {
            worst_level = worst_level.max(residual(p, &xi));
            acc += a1_defect(p) / (chi * chi);
        }
        let c = acc / per_chi as f64;
        rows.push((chi.re, chi.im, c.re));
        debug_assert!(c.im.abs() < 1e-6);
    }
    let c = rows.iter().map(|r| r.2).sum::<f64>() / rows.len().max(1) as f64;
    let spread = rows.iter().map(|r| (r.2 - c).abs()).fold(0.0, f64::max);
    Ok(Calibration { per_chi: rows, c, spread, max_level_residual: worst_level })
}
