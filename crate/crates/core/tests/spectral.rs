use proptest::prelude::*;

use platycosm_core::fixtures::{field, g1_trivial};
use platycosm_core::higgs_harmonic::{Grid, HiggsField};
use platycosm_core::linalg::{self, c64, CMat};
use platycosm_core::platycosm::presentation;
use platycosm_core::rng::{random_invertible, SeedStream};
use platycosm_core::spectral_cover::{
    cameral_cover, hitchin_map, poly_field_distance, quotient_distance, reconstruct, sheet_distance, spectral_cover, spectral_data,
};

// trace-free diagonal covectors, n sheets with pairwise separated values
fn covectors(n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), n - 1)
        .prop_map(move |mut v| {
            let mut last = [0.0; 3];
            for row in &v {
                for i in 0..3 {
                    last[i] -= row[i];
                }
            }
            v.push(last);
            v
        })
        .prop_filter("separated sheets", |v| {
            (0..v.len()).all(|a| (0..a).all(|b| (0..3).map(|i| (v[a][i] - v[b][i]).abs()).fold(0.0, f64::max) > 1e-2))
        })
}

fn conjugated_field(n: usize, sheets: &[[f64; 3]], seed: u64) -> (HiggsField, HiggsField) {
    let grid = Grid::new(&presentation("G1").unwrap(), 4).unwrap();
    let diag = |i: usize| linalg::from_real_diag(&sheets.iter().map(|s| s[i]).collect::<Vec<_>>());
    let plain = HiggsField::new(grid.clone(), g1_trivial(n), |_| [diag(0), diag(1), diag(2)]);
    let g = linalg::normalize_det(&random_invertible(&mut SeedStream::new(seed).fork("frame"), n));
    let gi = linalg::inverse(&g).unwrap();
    let conj: Vec<CMat> = plain.comps.iter().map(|m| &g * m * &gi).collect();
    (plain.clone(), HiggsField { comps: conj, ..plain })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hitchin_map_is_conjugation_invariant(seed in any::<u64>(), sh in (2usize..4).prop_flat_map(covectors)) {
        let (plain, conj) = conjugated_field(sh.len(), &sh, seed);
        let d = poly_field_distance(&hitchin_map(&plain), &hitchin_map(&conj));
        prop_assert!(d <= 1e-8, "distance {}", d);
    }

    #[test]
    fn constant_fields_round_trip(seed in any::<u64>(), sh in (2usize..4).prop_flat_map(covectors)) {
        let (plain, conj) = conjugated_field(sh.len(), &sh, seed);
        let cover = spectral_cover(&conj, 1e-10).unwrap();
        prop_assert!(cover.is_unramified() && cover.real);
        prop_assert_eq!(cover.components(), sh.len());
        prop_assert!(sheet_distance(&cover, &spectral_cover(&plain, 1e-10).unwrap()) <= 1e-8);
        let back = reconstruct(&spectral_data(&conj, None, 1e-10).unwrap()).unwrap();
        prop_assert!(sheet_distance(&spectral_cover(&back.theta, 1e-10).unwrap(), &cover) <= 1e-9);
        let cam = cameral_cover(&conj, 1e-10).unwrap();
        prop_assert!(quotient_distance(&cam, &cover) <= 1e-9);
    }
}

#[test]
fn named_fixtures_have_expected_ramification() {
    let zero = spectral_cover(&field("zero", 4).unwrap(), 1e-10).unwrap();
    assert!(zero.is_totally_ramified());
    let sine = spectral_cover(&field("sine", 4).unwrap(), 1e-10).unwrap();
    assert!(!sine.is_unramified() && !sine.is_totally_ramified());
    for name in ["constant", "gradient", "wavy", "g6-axis"] {
        assert!(spectral_cover(&field(name, 4).unwrap(), 1e-10).unwrap().is_unramified(), "{name}");
    }
}

#[test]
fn sheet_distance_sees_a_perturbation() {
    let a = field("constant", 4).unwrap();
    let mut b = a.clone();
    b.comps[0] = &b.comps[0] + linalg::from_diag(&[c64(1e-3, 0.0), c64(-1e-3, 0.0)]);
    let d = sheet_distance(&spectral_cover(&a, 1e-10).unwrap(), &spectral_cover(&b, 1e-10).unwrap());
    assert!((d - 1e-3).abs() < 1e-12);
}
