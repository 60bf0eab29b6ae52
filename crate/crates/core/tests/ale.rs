#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use platycosm_core::kronheimer_ale::{a1_defect, complex_invariants, freeness_check, moment_map, solve_level_set, QuatPair, SmoothingParameter};
use platycosm_core::rng::SeedStream;

fn point() -> impl Strategy<Value = QuatPair> {
    prop::array::uniform8(-2.0f64..2.0).prop_map(|x| QuatPair::from_vec(&x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn moment_map_and_invariants_are_circle_invariant(p in point(), t in 0.0f64..std::f64::consts::TAU) {
        let q = p.act(t);
        let (m0, m1) = (moment_map(&p), moment_map(&q));
        for i in 0..3 {
            prop_assert!((m0[i] - m1[i]).abs() <= 1e-12);
        }
        let (u0, v0, w0) = complex_invariants(&p);
        let (u1, v1, w1) = complex_invariants(&q);
        prop_assert!((u0 - u1).norm() + (v0 - v1).norm() + (w0 - w1).norm() <= 1e-11);
    }

    #[test]
    fn invariants_satisfy_the_deformed_relation(p in point()) {
        let m = moment_map(&p);
        let mu_c = num_complex::Complex64::new(m[1], m[2]);
        prop_assert!((a1_defect(&p) + 0.25 * mu_c * mu_c).norm() <= 1e-11);
    }

    #[test]
    fn level_set_samples_lie_on_the_level(xi in prop::array::uniform3(-1.5f64..1.5), seed in any::<u64>()) {
        let xi = SmoothingParameter::new(xi);
        prop_assume!(xi.is_generic());
        let mut rng = SeedStream::new(seed).fork("level");
        let pts = solve_level_set(&xi, 8, &mut rng).unwrap();
        for p in &pts {
            let m = moment_map(p);
            for i in 0..3 {
                prop_assert!((m[i] - xi.xi[i]).abs() <= 1e-9);
            }
            let c = xi.chi_c();
            prop_assert!((a1_defect(p) + 0.25 * c * c).norm() <= 1e-8 * (1.0 + p.norm().powi(4)));
        }
        prop_assert!(freeness_check(&xi).free);
    }
}

#[test]
fn origin_is_the_only_fixed_point_on_the_zero_level() {
    let f = freeness_check(&SmoothingParameter::new([0.0; 3]));
    assert!(!f.free);
    assert_eq!(f.witness, Some(QuatPair::origin()));
}
