//! Named fields and representations shared by the command line front end,
//! the integration tests and the guide.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::char_variety::{lift_representation, CharError, Representation, TorusClass};
use crate::higgs_harmonic::{Grid, HiggsError, HiggsField};
use crate::linalg::{self, c64, CMat};
use crate::platycosm::presentation;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("unknown fixture `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Char(#[from] CharError),
    #[error(transparent)]
    Higgs(#[from] HiggsError),
}

pub const FIELD_FIXTURES: [&str; 6] = ["zero", "constant", "sine", "gradient", "wavy", "g6-axis"];

pub const REP_FIXTURES: [&str; 4] = ["trivial", "unitary", "g1-diagonal", "g6-line"];

fn diag2(a: f64) -> CMat {
    linalg::from_real_diag(&[a, -a])
}

/// `ρ(e_i) = diag(λ_i, λ_i⁻¹)` on the three-torus.
pub fn g1_diagonal(lams: [Complex64; 3]) -> Representation {
    let p = presentation("G1").expect("G1");
    let images = lams.iter().map(|l| linalg::from_diag(&[*l, l.inv()])).collect();
    Representation::new(p, images).expect("diagonal images have determinant one")
}

pub fn g1_trivial(n: usize) -> Representation {
    Representation::trivial(presentation("G1").expect("G1"), n)
}

/// The class `(z, −1, −1)` on the first axis of the G6 fixed locus, lifted.
pub fn g6_line(z: Complex64) -> Result<Representation, CharError> {
    let p = presentation("G6").expect("G6");
    lift_representation(&p, &TorusClass::sl2([z, c64(-1.0, 0.0), c64(-1.0, 0.0)]))
}

pub fn representation(name: &str) -> Result<Representation, FixtureError> {
    Ok(match name {
        "trivial" => g1_trivial(2),
        "unitary" => g1_diagonal([Complex64::from_polar(1.0, 0.7), c64(0.0, 1.0), Complex64::from_polar(1.0, -2.1)]),
        "g1-diagonal" => g1_diagonal([Complex64::from_polar(2.0, 0.4), Complex64::from_polar(1.0, 1.3), c64(1.0, 0.0)]),
        "g6-line" => g6_line(c64(1.5, 0.9))?,
        other => return Err(FixtureError::Unknown(other.to_string())),
    })
}

/// `θ_i = (a_i + D_i f)·diag(1, −1)` with the centered difference `D_i`, so the
/// discrete curl vanishes exactly.
pub fn gradient_field(n: usize, a: [f64; 3], amp: f64) -> Result<HiggsField, FixtureError> {
    let g = Grid::new(&presentation("G1").expect("G1"), n)?;
    let f = |v: usize| {
        let x = g.point(v);
        amp * ((2.0 * PI * x[0]).sin() + (2.0 * PI * (x[1] + x[2])).cos())
    };
    let mut comps = Vec::with_capacity(3 * g.len());
    for v in 0..g.len() {
        for i in 0..3 {
            let d = (f(g.neighbor(v, i, 1).0) - f(g.neighbor(v, i, -1).0)) / (2.0 * g.h);
            comps.push(diag2(a[i] + d));
        }
    }
    Ok(HiggsField { grid: g, comps, twist: g1_trivial(2) })
}

/// Higgs field fixtures on an `n`-grid:
/// `zero` (totally ramified), `constant` (two sheets), `sine` (ramified on two planes),
/// `gradient` (closed, unramified), `wavy` (unramified, not closed),
/// `g6-axis` (constant on the first axis of G6, sheets exchanged).
pub fn field(name: &str, n: usize) -> Result<HiggsField, FixtureError> {
    let g1 = presentation("G1").expect("G1");
    let zero = || CMat::zeros(2, 2);
    Ok(match name {
        "zero" => HiggsField::new(Grid::new(&g1, n)?, g1_trivial(2), |_| [zero(), zero(), zero()]),
        "constant" => HiggsField::new(Grid::new(&g1, n)?, g1_trivial(2), |_| [diag2(0.5), diag2(-0.2), diag2(0.3)]),
        "sine" => HiggsField::new(Grid::new(&g1, n)?, g1_trivial(2), |x| [diag2((2.0 * PI * x[0]).sin()), zero(), zero()]),
        "gradient" => gradient_field(n, [3.0, 1.0, -2.0], 0.1)?,
        "wavy" => HiggsField::new(Grid::new(&g1, n)?, g1_trivial(2), |x| {
            [diag2(3.0 + 0.5 * (2.0 * PI * x[1]).sin()), diag2(1.0), diag2(-2.0)]
        }),
        "g6-axis" => {
            let z = c64(2.5, 1.0);
            let rep = g6_line(z)?;
            let g = Grid::new(&rep.presentation, n)?;
            let a = z.norm().ln();
            HiggsField::new(g, rep, |_| [diag2(a), zero(), zero()])
        }
        other => return Err(FixtureError::Unknown(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_twist_consistent() {
        for name in FIELD_FIXTURES {
            let f = field(name, 4).unwrap();
            assert!(f.twist_residual().unwrap() < 1e-12, "{name}");
        }
        for name in REP_FIXTURES {
            assert!(crate::char_variety::relation_residual(&representation(name).unwrap()) < 1e-12, "{name}");
        }
        assert!(matches!(field("nope", 4), Err(FixtureError::Unknown(_))));
    }
}
