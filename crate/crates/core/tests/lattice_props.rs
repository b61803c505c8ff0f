use halfstrip_core::com::TableLaw;
use halfstrip_core::lattice::{
    builtin_lattice, find_coarser_lattice, minimality_check, periodicity_defect, support_membership, LatticeFamily,
    LatticeSpec, MinimalityOptions,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn phi_modulus_is_periodic_on_the_dual(d in 1usize..=3, t in prop::collection::vec(-4.0f64..4.0, 3)) {
        let law = TableLaw::ssrw(d).unwrap();
        let spec = builtin_lattice(LatticeFamily::Ssrw, d).unwrap();
        let defect = periodicity_defect(&law, &spec, &[t[..d].to_vec()], 2);
        prop_assert!(defect <= 1e-12, "{}", defect);
    }
}

#[test]
fn builtin_ssrw_lattices_have_index_two() {
    for d in 1..=5 {
        let law = TableLaw::ssrw(d).unwrap();
        let spec = builtin_lattice(LatticeFamily::Ssrw, d).unwrap();
        assert_eq!(spec.h, 2.0, "d = {d}");
        assert!(support_membership(&law, &spec));
    }
}

#[test]
fn no_coarser_lattice_than_the_builtin() {
    for d in 1..=2 {
        let law = TableLaw::ssrw(d).unwrap();
        let spec = builtin_lattice(LatticeFamily::Ssrw, d).unwrap();
        assert!(find_coarser_lattice(&law, &spec, 2).is_none(), "d = {d}");
        // the integer lattice is not minimal and a coarser one is found
        let z = LatticeSpec::new((0..d).map(|i| (0..d).map(|j| (i == j) as u8 as f64).collect()).collect(), vec![0.0; d]).unwrap();
        let coarse = find_coarser_lattice(&law, &z, 2).expect("coarser lattice");
        assert!(coarse.h >= 2.0);
    }
}

#[test]
fn lazy_walk_is_minimal_on_the_integers() {
    let law = TableLaw::lazy_ssrw(2).unwrap();
    let spec = builtin_lattice(LatticeFamily::LazySsrw, 2).unwrap();
    let rep = minimality_check(&law, &spec, &MinimalityOptions { grid: 61, ..Default::default() }).unwrap();
    assert!(rep.passed && rep.h == 1.0, "{rep:?}");
}

#[test]
fn integer_lattice_fails_for_the_simple_walk() {
    let law = TableLaw::ssrw(2).unwrap();
    let spec = LatticeSpec::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
    let rep = minimality_check(&law, &spec, &MinimalityOptions { grid: 61, ..Default::default() }).unwrap();
    assert!(!rep.passed);
    assert!(rep.max_abs_phi > 1.0 - 1e-10);
}
