//! Type-A Lie theory: Cartan data for SL(n,C), the Weyl group Σ_n,
//! simultaneous diagonalization of commuting families and invariant
//! polynomials.
//!
//! The Cartan subalgebra is the sum-zero subspace of Cⁿ. The invariant
//! polynomials are the coefficients of the characteristic polynomial.

use crate::linalg::{self, c64, CMat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("rank must satisfy n >= 2, got n = {0}")]
    InvalidRank(usize),
    #[error("entries do not sum to zero (|sum| = {0:e})")]
    NotSumZero(f64),
    #[error("matrices do not commute: commutator norm {norm:e} exceeds {bound:e}")]
    NonCommuting { norm: f64, bound: f64 },
    #[error("non-semisimple input: Jordan block detected (residual {residual:e})")]
    Defective { residual: f64 },
    #[error("matrix is not traceless (|tr| = {0:e})")]
    NonTraceless(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// SL(n,C) with its compact form SU(n).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LieContext {
    pub n: usize,
    pub rank: usize,
    pub weyl_order: usize,
}

impl LieContext {
    pub fn new(n: usize) -> Result<Self, LieError> {
        if n < 2 {
            return Err(LieError::InvalidRank(n));
        }
        Ok(LieContext { n, rank: n - 1, weyl_order: (1..=n).product() })
    }
}

/// An element of the complexified Cartan subalgebra.
#[derive(Clone, Debug, PartialEq)]
pub struct CartanVector {
    entries: Vec<Complex64>,
}

impl CartanVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self, LieError> {
        let sum: Complex64 = entries.iter().sum();
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if sum.norm() > 1e-12 * scale {
            return Err(LieError::NotSumZero(sum.norm()));
        }
        Ok(CartanVector { entries })
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }
}

/// A permutation of `{0..n-1}`, acting on n-tuples by `(w·v)[w(i)] = v[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeylElement {
    pub perm: Vec<usize>,
}

impl WeylElement {
    pub fn identity(n: usize) -> Self {
        WeylElement { perm: (0..n).collect() }
    }

    pub fn from_perm(perm: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return None;
            }
            seen[p] = true;
        }
        Some(WeylElement { perm })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, p)| i == *p)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &WeylElement) -> WeylElement {
        WeylElement { perm: other.perm.iter().map(|&i| self.perm[i]).collect() }
    }

    pub fn inverse(&self) -> WeylElement {
        let mut inv = vec![0; self.n()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        WeylElement { perm: inv }
    }

    pub fn sign(&self) -> i32 {
        let mut seen = vec![false; self.n()];
        let mut s = 1;
        for i in 0..self.n() {
            if seen[i] {
                continue;
            }
            let mut len = 0;
            let mut j = i;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                s = -s;
            }
        }
        s
    }

    /// Moves item `i` to slot `perm[i]`.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        let mut out = items.to_vec();
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = items[i].clone();
        }
        out
    }

    pub fn act(&self, v: &CartanVector) -> CartanVector {
        CartanVector { entries: self.apply(&v.entries) }
    }
}

/// All n! permutations in lexicographic order (identity first).
pub fn weyl_group(ctx: &LieContext) -> Vec<WeylElement> {
    permutations(ctx.n).into_iter().map(|perm| WeylElement { perm }).collect()
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// Result of [`simultaneous_diagonalize`]. Column `i` of `basis` is the
/// common eigenvector whose eigenvalue under `mats[k]` is `eigen_tuples[i][k]`.
#[derive(Clone, Debug)]
pub struct Diagonalization {
    pub basis: CMat,
    pub eigen_tuples: Vec<Vec<Complex64>>,
    /// max_k ‖mats[k] − basis·D_k·basis⁻¹‖
    pub reconstruction: f64,
}

// Fixed generic coefficients for the auxiliary linear combination.
fn mixing_coefficient(k: usize) -> Complex64 {
    let t = 0.713 + 1.291 * k as f64;
    c64(t.cos(), t.sin()) * (1.0 + 0.377 * k as f64)
}

fn non_scalar_part(m: &CMat) -> f64 {
    let n = m.nrows();
    let mean = linalg::trace(m) / c64(n as f64, 0.0);
    linalg::fro(&(m - CMat::identity(n, n) * mean))
}

/// Simultaneously diagonalize a commuting family of semisimple matrices.
///
/// Eigenvalues of a generic combination are clustered; each cluster's
/// eigenspace is recovered from the singular vectors of `M − λ̄I` and the
/// family is recursively split inside clusters that stay degenerate.
pub fn simultaneous_diagonalize(mats: &[CMat], tol: f64) -> Result<Diagonalization, LieError> {
    let Some(first) = mats.first() else {
        return Err(LieError::Shape("empty matrix list".into()));
    };
    let n = first.nrows();
    if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(LieError::Shape("matrices must be square of equal size".into()));
    }
    let scale = mats.iter().map(linalg::fro).fold(0.0, f64::max);
    let bound = tol * scale * scale;
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            let norm = linalg::fro(&linalg::commutator(&mats[i], &mats[j]));
            if norm > bound {
                return Err(LieError::NonCommuting { norm, bound });
            }
        }
    }
    let basis = split(mats, n)?;
    let inv = linalg::inverse(&basis).ok_or(LieError::Defective { residual: f64::INFINITY })?;
    let mut eigen_tuples = vec![vec![c64(0.0, 0.0); mats.len()]; n];
    let mut reconstruction: f64 = 0.0;
    for (k, m) in mats.iter().enumerate() {
        let d = &inv * m * &basis;
        let diag: Vec<Complex64> = (0..n).map(|i| d[(i, i)]).collect();
        for i in 0..n {
            eigen_tuples[i][k] = diag[i];
        }
        let rebuilt = &basis * linalg::from_diag(&diag) * &inv;
        reconstruction = reconstruction.max(linalg::fro(&(m - rebuilt)));
    }
    if reconstruction > 1e-6 * scale.max(1e-300) {
        return Err(LieError::Defective { residual: reconstruction });
    }
    Ok(Diagonalization { basis, eigen_tuples, reconstruction })
}

fn split(mats: &[CMat], n: usize) -> Result<CMat, LieError> {
    if n == 1 {
        return Ok(CMat::identity(1, 1));
    }
    let scale = mats.iter().map(linalg::fro).fold(0.0, f64::max);
    let small = 1e-7 * scale.max(f64::MIN_POSITIVE);
    if mats.iter().all(|m| non_scalar_part(m) <= small) {
        return Ok(CMat::identity(n, n));
    }
    let mut m = CMat::zeros(n, n);
    for (k, a) in mats.iter().enumerate() {
        m += a * mixing_coefficient(k);
    }
    let sm = linalg::fro(&m).max(f64::MIN_POSITIVE);
    let eig = linalg::eigenvalues(&m).ok_or(LieError::Defective { residual: f64::NAN })?;

    // cluster eigenvalues by single linkage
    let radius = 1e-7 * sm;
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (eig[i] - eig[j]).norm() <= radius {
                let (a, b) = (find(&label, i), find(&label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&label, i);
        match roots.iter().position(|x| *x == r) {
            Some(p) => clusters[p].push(i),
            None => {
                roots.push(r);
                clusters.push(vec![i]);
            }
        }
    }

    let mut basis = CMat::zeros(n, n);
    let mut col = 0;
    for cl in &clusters {
        let size = cl.len();
        let mean: Complex64 = cl.iter().map(|i| eig[*i]).sum::<Complex64>() / c64(size as f64, 0.0);
        let shifted = &m - CMat::identity(n, n) * mean;
        let (v, _) = linalg::smallest_right_singular(&shifted, size);
        let residual = linalg::fro(&(&shifted * &v));
        if residual > 1e-6 * sm {
            return Err(LieError::Defective { residual });
        }
        if size == n {
            // a non-scalar combination with a single eigenvalue cluster
            return Err(LieError::Defective { residual: non_scalar_part(&m) });
        }
        let sub: Vec<CMat> = mats.iter().map(|a| v.adjoint() * a * &v).collect();
        let inner = split(&sub, size)?;
        let block = &v * inner;
        for j in 0..size {
            let c = block.column(j).normalize();
            basis.set_column(col, &c);
            col += 1;
        }
    }
    Ok(basis)
}

fn find(label: &[usize], mut i: usize) -> usize {
    while label[i] != i {
        i = label[i];
    }
    i
}

/// Characteristic polynomial coefficients `[1, c_1, …, c_n]` of
/// `λⁿ + c_1 λⁿ⁻¹ + … + c_n`, by Faddeev–LeVerrier.
pub fn char_poly(mat: &CMat) -> Vec<Complex64> {
    let n = mat.nrows();
    let mut coeffs = vec![c64(1.0, 0.0)];
    let mut mk = CMat::zeros(n, n);
    for k in 1..=n {
        mk = mat * &mk + CMat::identity(n, n) * coeffs[k - 1];
        let am = mat * &mk;
        coeffs.push(-linalg::trace(&am) / c64(k as f64, 0.0));
    }
    coeffs
}

/// Coefficients `p_2, …, p_n` of the characteristic polynomial of a
/// traceless matrix.
pub fn chevalley_invariants(mat: &CMat) -> Result<Vec<Complex64>, LieError> {
    let tr = linalg::trace(mat).norm();
    if tr > 1e-10 * linalg::fro(mat).max(1e-300) && tr > 0.0 {
        return Err(LieError::NonTraceless(tr));
    }
    Ok(char_poly(mat)[2..].to_vec())
}

fn cmp_rows(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Canonical Σ_n-orbit representative: rows sorted lexicographically on
/// `(Re, Im)` entry by entry. Sorting is stable, so ties keep input order.
pub fn weyl_canonical(rows: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let mut out = rows.to_vec();
    out.sort_by(|a, b| cmp_rows(a, b));
    out
}

/// Smallest sup-distance between two row sets over all row matchings.
pub fn orbit_distance(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    permutations(a.len())
        .into_iter()
        .map(|p| {
            a.iter()
                .enumerate()
                .flat_map(|(i, row)| row.iter().zip(&b[p[i]]).map(|(x, y)| (x - y).norm()))
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Best row matching `p` with `a[i] ≈ b[p[i]]`.
pub fn best_matching(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::INFINITY);
    for p in permutations(a.len()) {
        let d = a
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().zip(&b[p[i]]).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max);
        if d < best.1 {
            best = (p, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_diag, from_rows};
    use crate::rng::{random_invertible, SeedStream};

    #[test]
    fn weyl_orders() {
        for n in 2..=5 {
            let ctx = LieContext::new(n).unwrap();
            let w = weyl_group(&ctx);
            assert_eq!(w.len(), ctx.weyl_order);
            assert!(w[0].is_identity());
        }
        assert!(LieContext::new(1).is_err());
    }

    #[test]
    fn weyl_group_is_closed() {
        let ctx = LieContext::new(3).unwrap();
        let w = weyl_group(&ctx);
        for a in &w {
            assert!(w.contains(&a.inverse()));
            for b in &w {
                assert!(w.contains(&a.compose(b)));
            }
        }
    }

    #[test]
    fn weyl_action_preserves_sum_zero() {
        let ctx = LieContext::new(3).unwrap();
        let v = CartanVector::new(vec![c64(1.0, 0.0), c64(-1.0, 0.0), c64(0.0, 0.0)]).unwrap();
        for w in weyl_group(&ctx) {
            let s: Complex64 = w.act(&v).entries().iter().sum();
            assert!(s.norm() < 1e-15);
        }
    }

    #[test]
    fn already_diagonal_pair() {
        let a = from_diag(&[c64(1.0, 0.0), c64(-1.0, 0.0)]);
        let b = from_diag(&[c64(2.0, 0.0), c64(-2.0, 0.0)]);
        let d = simultaneous_diagonalize(&[a, b], 1e-10).unwrap();
        let mut rows = d.eigen_tuples.clone();
        rows = weyl_canonical(&rows);
        assert!((rows[0][0] - c64(-1.0, 0.0)).norm() < 1e-12);
        assert!((rows[0][1] - c64(-2.0, 0.0)).norm() < 1e-12);
        assert!((rows[1][1] - c64(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn conjugated_pair_recovers_rows() {
        let mut rng = SeedStream::new(1).fork("conj");
        let g = random_invertible(&mut rng, 2);
        let gi = g.clone().try_inverse().unwrap();
        let a = &g * from_diag(&[c64(1.0, 0.0), c64(-1.0, 0.0)]) * &gi;
        let b = &g * from_diag(&[c64(0.0, 1.0), c64(0.0, -1.0)]) * &gi;
        let d = simultaneous_diagonalize(&[a, b], 1e-10).unwrap();
        let want = vec![vec![c64(1.0, 0.0), c64(0.0, 1.0)], vec![c64(-1.0, 0.0), c64(0.0, -1.0)]];
        assert!(orbit_distance(&d.eigen_tuples, &want) < 1e-10);
    }

    #[test]
    fn nilpotent_is_defective() {
        let nil = from_rows(2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let z = CMat::zeros(2, 2);
        assert!(matches!(simultaneous_diagonalize(&[nil, z], 1e-10), Err(LieError::Defective { .. })));
    }

    #[test]
    fn non_commuting_is_rejected() {
        let a = from_rows(2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)]);
        let b = from_diag(&[c64(1.0, 0.0), c64(-1.0, 0.0)]);
        assert!(matches!(simultaneous_diagonalize(&[a, b], 1e-10), Err(LieError::NonCommuting { .. })));
    }

    #[test]
    fn degenerate_block_is_split_by_second_matrix() {
        // first matrix has a repeated eigenvalue, the second separates it
        let a = from_diag(&[c64(1.0, 0.0), c64(1.0, 0.0), c64(-2.0, 0.0)]);
        let b = from_diag(&[c64(3.0, 0.0), c64(-1.0, 0.0), c64(-2.0, 0.0)]);
        let mut rng = SeedStream::new(2).fork("deg");
        let g = random_invertible(&mut rng, 3);
        let gi = g.clone().try_inverse().unwrap();
        let d = simultaneous_diagonalize(&[&g * a * &gi, &g * b * &gi], 1e-10).unwrap();
        let want = vec![
            vec![c64(1.0, 0.0), c64(3.0, 0.0)],
            vec![c64(1.0, 0.0), c64(-1.0, 0.0)],
            vec![c64(-2.0, 0.0), c64(-2.0, 0.0)],
        ];
        assert!(orbit_distance(&d.eigen_tuples, &want) < 1e-9);
    }

    #[test]
    fn chevalley_diag() {
        let a = c64(1.7, 0.4);
        let p = chevalley_invariants(&from_diag(&[a, -a])).unwrap();
        assert!((p[0] + a * a).norm() < 1e-14);
        let z = chevalley_invariants(&CMat::zeros(3, 3)).unwrap();
        assert!(z.iter().all(|x| x.norm() == 0.0));
        assert!(chevalley_invariants(&CMat::identity(2, 2)).is_err());
    }

    #[test]
    fn canonical_examples() {
        let r = |a: f64, b: f64| vec![c64(a, 0.0), c64(b, 0.0)];
        let rows = vec![r(-1.0, -2.0), r(1.0, 2.0)];
        assert_eq!(weyl_canonical(&rows), rows);
        let swapped = vec![r(1.0, 2.0), r(-1.0, -2.0)];
        assert_eq!(weyl_canonical(&swapped), rows);
        let same = vec![r(3.0, 3.0), r(3.0, 3.0)];
        assert_eq!(weyl_canonical(&same), same);
    }
}
