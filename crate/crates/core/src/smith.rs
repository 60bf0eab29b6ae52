//! Integer Smith normal form and binomial systems on complex tori.
//!
//! A binomial system `t^A = c` is solved in log coordinates
//! `A·x ≡ log c (mod 2πi)`. With `U·A·V = D` the system decouples into
//! `d_i y_i ≡ (U log c)_i`, which makes solvability, dimension and the
//! number of connected components exact integer questions.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct Smith {
    /// rows × rows, unimodular
    pub u: Vec<Vec<i128>>,
    /// cols × cols, unimodular
    pub v: Vec<Vec<i128>>,
    /// inverse of `v`
    pub v_inv: Vec<Vec<i128>>,
    /// nonzero invariant factors d_1 | d_2 | …, all positive
    pub d: Vec<i128>,
    pub rows: usize,
    pub cols: usize,
}

impl Smith {
    pub fn rank(&self) -> usize {
        self.d.len()
    }
}

fn identity(n: usize) -> Vec<Vec<i128>> {
    (0..n).map(|i| (0..n).map(|j| i128::from(i == j)).collect()).collect()
}

/// Smith normal form of an integer matrix given by rows.
pub fn smith_normal_form(a: &[Vec<i64>], cols: usize) -> Smith {
    let rows = a.len();
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|x| *x as i128).collect()).collect();
    let mut u = identity(rows);
    let mut v = identity(cols);
    let mut v_inv = identity(cols);
    let mut d = Vec::new();

    let swap_rows = |m: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, i: usize, j: usize| {
        m.swap(i, j);
        u.swap(i, j);
    };
    // row_i += f·row_j
    let add_row = |m: &mut Vec<Vec<i128>>, u: &mut Vec<Vec<i128>>, i: usize, j: usize, f: i128| {
        for c in 0..m[0].len() {
            let x = m[j][c];
            m[i][c] += f * x;
        }
        for c in 0..u[0].len() {
            let x = u[j][c];
            u[i][c] += f * x;
        }
    };
    let swap_cols = |m: &mut Vec<Vec<i128>>, v: &mut Vec<Vec<i128>>, vi: &mut Vec<Vec<i128>>, i: usize, j: usize| {
        for r in m.iter_mut() {
            r.swap(i, j);
        }
        for r in v.iter_mut() {
            r.swap(i, j);
        }
        vi.swap(i, j);
    };
    // col_i += f·col_j
    let add_col = |m: &mut Vec<Vec<i128>>, v: &mut Vec<Vec<i128>>, vi: &mut Vec<Vec<i128>>, i: usize, j: usize, f: i128| {
        for r in m.iter_mut() {
            let x = r[j];
            r[i] += f * x;
        }
        for r in v.iter_mut() {
            let x = r[j];
            r[i] += f * x;
        }
        // inverse update: row_j -= f·row_i
        for c in 0..vi[0].len() {
            let x = vi[i][c];
            vi[j][c] -= f * x;
        }
    };

    for t in 0..rows.min(cols) {
        loop {
            // pivot: smallest nonzero |entry| in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    if m[i][j] != 0 && best.is_none_or(|(bi, bj)| m[i][j].abs() < m[bi][bj].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else { break };
            swap_rows(&mut m, &mut u, t, pi);
            swap_cols(&mut m, &mut v, &mut v_inv, t, pj);
            let mut clean = true;
            for i in t + 1..rows {
                let q = m[i][t].div_euclid(m[t][t]);
                if q != 0 {
                    add_row(&mut m, &mut u, i, t, -q);
                }
                clean &= m[i][t] == 0;
            }
            for j in t + 1..cols {
                let q = m[t][j].div_euclid(m[t][t]);
                if q != 0 {
                    add_col(&mut m, &mut v, &mut v_inv, j, t, -q);
                }
                clean &= m[t][j] == 0;
            }
            if !clean {
                continue;
            }
            // divisibility of the trailing block
            let p = m[t][t];
            let bad = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| m[i][j] % p != 0));
            match bad {
                Some(i) => add_row(&mut m, &mut u, t, i, 1),
                None => break,
            }
        }
        if m[t][t] == 0 {
            break;
        }
        if m[t][t] < 0 {
            for c in 0..rows {
                u[t][c] = -u[t][c];
            }
            for c in 0..cols {
                m[t][c] = -m[t][c];
            }
        }
        d.push(m[t][t]);
    }
    Smith { u, v, v_inv, d, rows, cols }
}

/// One connected component of a binomial system's solution set, in log
/// coordinates: `x0 + span(kernel)` modulo `2πi·Zᴺ`.
#[derive(Clone, Debug)]
pub struct TorusComponent {
    pub x0: Vec<Complex64>,
    /// integer kernel basis vectors (columns of V)
    pub kernel: Vec<Vec<i128>>,
    /// saturated integer equations cutting out the subtorus through 1
    pub equations: Vec<Vec<i128>>,
}

impl TorusComponent {
    pub fn dim(&self) -> usize {
        self.kernel.len()
    }

    /// Point for complex kernel parameters `s`.
    pub fn point(&self, s: &[Complex64]) -> Vec<Complex64> {
        let mut x = self.x0.clone();
        for (k, col) in self.kernel.iter().enumerate() {
            for i in 0..x.len() {
                x[i] += s[k] * col[i] as f64;
            }
        }
        x.into_iter().map(|z| z.exp()).collect()
    }

    /// Whether the torus point `t` lies on this component.
    pub fn contains(&self, t: &[Complex64], tol: f64) -> bool {
        let logs: Vec<Complex64> = t.iter().zip(&self.x0).map(|(z, x0)| z.ln() - x0).collect();
        self.equations.iter().all(|row| {
            let s: Complex64 = row.iter().zip(&logs).map(|(a, l)| l * (*a as f64)).sum();
            let turns = s.im / (2.0 * PI);
            s.re.abs() <= tol && (turns - turns.round()).abs() <= tol
        })
    }
}

#[derive(Clone, Debug)]
pub struct BinomialSolution {
    pub dim: usize,
    pub components: Vec<TorusComponent>,
}

/// Solve `Σ_j a_ej x_j ≡ b_e (mod 2πi)` over Cᴺ. Returns `None` when the
/// system is inconsistent (residual above `tol`). At most `max_components`
/// components are enumerated.
pub fn solve_binomial(a: &[Vec<i64>], b: &[Complex64], n: usize, tol: f64, max_components: usize) -> Option<BinomialSolution> {
    let s = smith_normal_form(a, n);
    let r = s.rank();
    let ub: Vec<Complex64> = (0..s.rows)
        .map(|i| (0..s.rows).map(|e| b[e] * s.u[i][e] as f64).sum())
        .collect();
    for c in ub.iter().skip(r) {
        let turns = c.im / (2.0 * PI);
        if c.re.abs() > tol || (turns - turns.round()).abs() > tol {
            return None;
        }
    }
    let kernel: Vec<Vec<i128>> = (r..n).map(|j| (0..n).map(|i| s.v[i][j]).collect()).collect();
    let equations: Vec<Vec<i128>> = (0..r).map(|i| s.v_inv[i].clone()).collect();
    let mut components = Vec::new();
    let mut counter = vec![0i128; r];
    loop {
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..r {
            let di = s.d[i] as f64;
            y[i] = (ub[i] + Complex64::new(0.0, 2.0 * PI * counter[i] as f64)) / di;
        }
        let x0: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| y[j] * s.v[i][j] as f64).sum()).collect();
        components.push(TorusComponent { x0, kernel: kernel.clone(), equations: equations.clone() });
        if components.len() >= max_components {
            break;
        }
        // odometer over k_i ∈ [0, d_i)
        let mut i = 0;
        while i < r {
            counter[i] += 1;
            if counter[i] < s.d[i] {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
        if i == r {
            break;
        }
    }
    Some(BinomialSolution { dim: n - r, components })
}

/// Number of components, `Π d_i`, without enumerating them.
pub fn component_count(a: &[Vec<i64>], n: usize) -> i128 {
    smith_normal_form(a, n).d.iter().product()
}
