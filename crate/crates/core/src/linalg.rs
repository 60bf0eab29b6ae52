//! Small dense complex linear algebra helpers on top of `nalgebra`.
//!
//! Matrices are `DMatrix<Complex64>`. Functions of hermitian matrices go
//! through the hermitian eigendecomposition.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn from_diag(d: &[Complex64]) -> CMat {
    let n = d.len();
    let mut m = CMat::zeros(n, n);
    for (i, v) in d.iter().enumerate() {
        m[(i, i)] = *v;
    }
    m
}

pub fn from_real_diag(d: &[f64]) -> CMat {
    from_diag(&d.iter().map(|x| c64(*x, 0.0)).collect::<Vec<_>>())
}

/// Row-major construction.
pub fn from_rows(n: usize, entries: &[Complex64]) -> CMat {
    CMat::from_row_slice(n, n, entries)
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMat) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

pub fn det(m: &CMat) -> Complex64 {
    m.clone().determinant()
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// Rescale to unit determinant using the principal n-th root.
pub fn normalize_det(m: &CMat) -> CMat {
    let n = m.nrows() as f64;
    let d = det(m);
    m / d.powf(1.0 / n)
}

/// Eigendecomposition of the hermitian part of `m`: ascending eigenvalues and
/// orthonormal eigenvectors as columns.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let e = nalgebra::SymmetricEigen::new(h);
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|a, b| e.eigenvalues[*a].total_cmp(&e.eigenvalues[*b]));
    let vals = idx.iter().map(|i| e.eigenvalues[*i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (j, i) in idx.iter().enumerate() {
        vecs.set_column(j, &e.eigenvectors.column(*i));
    }
    (vals, vecs)
}

/// `V f(Λ) Vᴴ` for the hermitian part of `m`.
pub fn herm_apply(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, v) = herm_eig(m);
    let n = m.nrows();
    let mut scaled = v.clone();
    for j in 0..n {
        let s = f(vals[j]);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled * v.adjoint()
}

pub fn sqrt_pd(m: &CMat) -> CMat {
    herm_apply(m, |x| x.max(0.0).sqrt())
}

pub fn inv_sqrt_pd(m: &CMat) -> CMat {
    herm_apply(m, |x| 1.0 / x.sqrt())
}

pub fn log_pd(m: &CMat) -> CMat {
    herm_apply(m, f64::ln)
}

pub fn exp_herm(m: &CMat) -> CMat {
    herm_apply(m, f64::exp)
}

pub fn min_eig_herm(m: &CMat) -> f64 {
    herm_eig(m).0[0]
}

/// The `k` right singular vectors of `a` with smallest singular values, as
/// columns, and those singular values (ascending). Wide inputs are padded
/// with zero rows so the full right singular basis is available.
pub fn smallest_right_singular(a: &CMat, k: usize) -> (CMat, Vec<f64>) {
    let n = a.ncols();
    let padded = if a.nrows() < n {
        let mut p = CMat::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|x, y| svd.singular_values[*x].total_cmp(&svd.singular_values[*y]));
    let mut out = CMat::zeros(n, k);
    let mut sv = Vec::with_capacity(k);
    for (j, i) in idx.iter().take(k).enumerate() {
        for r in 0..n {
            out[(r, j)] = vt[(*i, r)].conj();
        }
        sv.push(svd.singular_values[*i]);
    }
    (out, sv)
}

/// Eigenvalues of a general complex matrix (diagonal of its Schur form).
pub fn eigenvalues(m: &CMat) -> Option<Vec<Complex64>> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    let s = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)?;
    let (_, t) = s.unpack();
    Some((0..m.nrows()).map(|i| t[(i, i)]).collect())
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(m: &CMat) -> CMat {
    let norm = fro(m);
    let mut s = 0;
    while norm / f64::powi(2.0, s) > 0.25 {
        s += 1;
    }
    let a = m / c64(f64::powi(2.0, s), 0.0);
    let n = m.nrows();
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..20 {
        term = &term * &a / c64(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `(Re, Im)` pairs, row-major. This is the wire format for matrices.
pub mod cmat_serde {
    use super::CMat;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMat, String> {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err("ragged matrix rows".into());
        }
        let flat: Vec<Complex64> = rows
            .iter()
            .flat_map(|row| row.iter().map(|p| Complex64::new(p[0], p[1])))
            .collect();
        Ok(CMat::from_row_slice(r, c, &flat))
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
            let all = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
            all.iter()
                .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// Complex numbers as `[re, im]`.
pub mod complex_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|row| row.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Complex64>>, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|row| row.into_iter().map(|p| Complex64::new(p[0], p[1])).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_and_log_are_consistent() {
        let m = from_rows(2, &[c64(2.0, 0.0), c64(0.5, 0.3), c64(0.5, -0.3), c64(1.0, 0.0)]);
        let r = sqrt_pd(&m);
        assert!(fro(&(&r * &r - &m)) < 1e-12);
        let back = exp_herm(&log_pd(&m));
        assert!(fro(&(back - &m)) < 1e-12);
    }

    #[test]
    fn expm_matches_diagonal() {
        let d = from_diag(&[c64(0.3, 1.0), c64(-0.3, -1.0)]);
        let e = expm(&d);
        assert!((e[(0, 0)] - c64(0.3, 1.0).exp()).norm() < 1e-13);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn null_vector_of_rank_one() {
        let a = from_rows(2, &[c64(1.0, 0.0), c64(1.0, 0.0), c64(2.0, 0.0), c64(2.0, 0.0)]);
        let (v, s) = smallest_right_singular(&a, 1);
        assert!(s[0] < 1e-12);
        assert!(fro(&(&a * &v)) < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let m = from_rows(2, &[c64(1.0, 2.0), c64(3.0, 4.0), c64(5.0, 6.0), c64(7.0, 8.0)]);
        let json = serde_json::to_string(&cmat_serde::to_rows(&m)).unwrap();
        assert_eq!(json, "[[[1.0,2.0],[3.0,4.0]],[[5.0,6.0],[7.0,8.0]]]");
        let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(&json).unwrap();
        assert_eq!(cmat_serde::from_rows(&rows).unwrap(), m);
    }
}
