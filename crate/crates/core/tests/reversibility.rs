//! Reversibility checks and the symmetric curve family.

use annulus_fixpoint::conley::ConleyDecomposition;
use annulus_fixpoint::reversible::{
    check_recurrent_symmetry, check_reversibility, check_symmetric_curve_intersection,
    standard_symmetric_curves, symmetric_shear_twist,
};
use annulus_fixpoint::{
    build_transition_graph, AnnulusMap, BoxCover, GraphOptions, Involution, LiftPoint,
};
use std::f64::consts::TAU;

fn reversible_catalog() -> Vec<AnnulusMap> {
    vec![
        AnnulusMap::pure_twist(),
        symmetric_shear_twist(0.1),
        symmetric_shear_twist(0.3),
    ]
}

#[test]
fn reversible_maps_pass_every_check() {
    let r = Involution::reflection();
    let curves = standard_symmetric_curves(256).unwrap();
    assert_eq!(curves.len(), 8);
    for map in reversible_catalog() {
        let check = check_reversibility(&map, &r, 64, 1e-12);
        assert!(check.passed, "{}: {check:?}", map.name());
        let verdicts = check_symmetric_curve_intersection(&map, &r, &curves, 1e-9, true).unwrap();
        assert!(
            verdicts.iter().all(|v| v.intersects()),
            "{}: {verdicts:?}",
            map.name()
        );

        let cover = BoxCover::new(32, 8, (0.0, 1.0)).unwrap();
        let g = build_transition_graph(&map, &cover, &GraphOptions::default()).unwrap();
        let d = ConleyDecomposition::compute(&g).unwrap();
        assert!(
            check_recurrent_symmetry(&d, &r, &cover).passed,
            "{}",
            map.name()
        );
    }
}

#[test]
fn drift_recurrent_set_is_symmetric_anyway() {
    let map = AnnulusMap::drift_twist(0.1).unwrap();
    let r = Involution::reflection();
    assert!(!check_reversibility(&map, &r, 32, 1e-6).passed);
    let cover = BoxCover::new(64, 16, (0.0, 1.0)).unwrap();
    let g = build_transition_graph(&map, &cover, &GraphOptions::default()).unwrap();
    let d = ConleyDecomposition::compute(&g).unwrap();
    assert!(check_recurrent_symmetry(&d, &r, &cover).passed);
}

#[test]
fn residual_grows_linearly_with_a_perturbation() {
    let r = Involution::reflection();
    let residual = |eta: f64| {
        let f = AnnulusMap::from_fns(
            "tilted_twist",
            move |p: LiftPoint| LiftPoint::new(p.x + p.y - 0.5 + eta * (TAU * p.x).sin(), p.y),
            None::<fn(LiftPoint) -> LiftPoint>,
        );
        check_reversibility(&f, &r, 32, 0.0).max_residual
    };
    let base = residual(1e-4) / 1e-4;
    assert!(base > 0.5);
    for eta in [1e-5, 3e-4, 1e-3] {
        let ratio = residual(eta) / eta;
        assert!(
            (ratio / base - 1.0).abs() < 0.05,
            "eta {eta}: {ratio} vs {base}"
        );
    }
}
