#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;
use proptest::prelude::*;

use platycosm_core::fixtures::gradient_field;
use platycosm_core::g2_structures::{
    duality_crosscheck, duality_samples, hypersymplectic_check, metric_from_3form, period_section, restrict_to_fiber, standard_phi,
    G2Error, HKTriple, Mat3, Mat4,
};
use platycosm_core::platycosm::presentation;
use platycosm_core::spectral_cover::spectral_cover;

fn det4(a: &Mat4) -> f64 {
    let m = nalgebra::Matrix4::from_fn(|i, j| a[i][j]);
    m.determinant()
}

fn near_identity4() -> impl Strategy<Value = Mat4> {
    prop::array::uniform4(prop::array::uniform4(-0.4f64..0.4)).prop_map(|mut a| {
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1.0;
        }
        a
    })
}

// B Bᵀ + 0.1 I
fn spd3() -> impl Strategy<Value = Mat3> {
    prop::array::uniform3(prop::array::uniform3(-1.0f64..1.0)).prop_map(|b| {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
            }
        }
        m
    })
}

fn check_phi(t: &HKTriple, lambda: f64) -> Result<(), TestCaseError> {
    let phi = standard_phi(t, lambda).unwrap();
    let m = metric_from_3form(&phi);
    prop_assert!(m.positive);
    let g = m.g.unwrap();
    let scale = g.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    for i in 0..4 {
        for j in 4..7 {
            prop_assert!(g[i][j].abs() <= 1e-10 * scale, "cross term g[{}][{}] = {}", i, j, g[i][j]);
        }
    }
    prop_assert!(restrict_to_fiber(&phi).coeffs.iter().all(|c| *c == 0.0));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pulled_back_triples_give_positive_split_metrics(a in near_identity4(), lambda in 0.1f64..5.0) {
        prop_assume!(det4(&a) > 0.05);
        let t = HKTriple::flat().pullback(&a);
        prop_assert!(hypersymplectic_check(&t).hypersymplectic);
        check_phi(&t, lambda)?;
    }

    #[test]
    fn spd_combinations_give_positive_split_metrics(m in spd3(), lambda in 0.1f64..5.0) {
        let t = HKTriple::flat().combine(&m);
        prop_assert!(hypersymplectic_check(&t).hypersymplectic);
        check_phi(&t, lambda)?;
    }

    #[test]
    fn period_section_recovers_the_periods(a in prop::array::uniform3(-3.0f64..3.0), amp in 0.0f64..0.2) {
        // |Dᵢf| ≤ 4π·amp, so the covector stays away from zero and the cover is unramified
        prop_assume!(a.iter().any(|x| x.abs() > 4.0 * std::f64::consts::PI * amp + 0.1));
        let theta = gradient_field(8, a, amp).unwrap();
        let ps = period_section(&theta, 1e-8).unwrap();
        prop_assert_eq!(ps.sheets(), 2);
        let cover = spectral_cover(&theta, 1e-10).unwrap();
        for r in 0..2 {
            let sign = if ps.periods[r][0].re * a[0] + ps.periods[r][1].re * a[1] + ps.periods[r][2].re * a[2] > 0.0 { 1.0 } else { -1.0 };
            for i in 0..3 {
                prop_assert!((ps.periods[r][i] - Complex64::new(sign * a[i], 0.0)).norm() <= 1e-9);
            }
            for v in 0..cover.len() {
                let grad = ps.gradient(v, r);
                for i in 0..3 {
                    prop_assert!((grad[i] - cover.sheets[v][r][i]).norm() <= 1e-8);
                }
            }
        }
    }
}

#[test]
fn degenerate_triples_are_rejected() {
    let mut t = HKTriple::flat();
    t.omega[2] = t.omega[1];
    assert!(!hypersymplectic_check(&t).hypersymplectic);
    assert!(standard_phi(&t, 1.0).is_err());
}

#[test]
fn duality_is_stable_under_refinement() {
    let p = presentation("G6").unwrap();
    for n in [4, 8, 16] {
        let rep = duality_crosscheck(&p, n, &duality_samples()).unwrap();
        assert_eq!(rep.component_match, 3, "N = {n}");
        assert!(rep.bijection);
        assert!(rep.max_parameter_error <= 1e-6, "N = {n}: {}", rep.max_parameter_error);
    }
}

#[test]
fn duality_is_g6_only() {
    let p = presentation("G2").unwrap();
    assert!(matches!(duality_crosscheck(&p, 4, &duality_samples()), Err(G2Error::Unsupported(_))));
}
