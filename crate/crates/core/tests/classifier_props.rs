mod common;

use halfstrip_core::classifier::{
    classify, compute_uv, lamperti_uv, moment_threshold, shift_residual, solve_shifts, stationary_distribution,
    transform_to_lamperti, Verdict,
};
use halfstrip_core::model::{CorrelatedRw, DriftProfile, Regime};
use halfstrip_core::rng::stream_rng;
use halfstrip_core::Error;
use proptest::prelude::*;

fn profile(seed: u64, n: usize) -> DriftProfile {
    common::random_profile(&mut stream_rng(seed, 0), n)
}

fn direct_verdict(u: f64, v: f64) -> Verdict {
    if u > v {
        Verdict::Transient
    } else if u < -v {
        Verdict::PositiveRecurrent
    } else {
        Verdict::NullRecurrent
    }
}

proptest! {
    #[test]
    fn uv_translation_invariant(seed in any::<u64>(), n in 2usize..=5, shift in -50.0f64..50.0) {
        let p = profile(seed, n);
        let pi = stationary_distribution(&p.q_limit).unwrap();
        let a = solve_shifts(&p.q_limit, &p.d, &pi).unwrap();
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let (u1, v1) = compute_uv(&pi, &a, &p);
        let (u2, v2) = compute_uv(&pi, &b, &p);
        prop_assert!((u1 - u2).abs() <= 1e-10 * (1.0 + shift.abs()));
        prop_assert!((v1 - v2).abs() <= 1e-10 * (1.0 + shift.abs()));
    }

    #[test]
    fn quadratic_identity_vanishes(seed in any::<u64>(), n in 2usize..=5, a in prop::collection::vec(-5.0f64..5.0, 5)) {
        let p = profile(seed, n);
        let pi = stationary_distribution(&p.q_limit).unwrap();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (a[j] * a[j] - a[i] * a[i]) * p.q_limit[i][j] * pi[i];
            }
        }
        prop_assert!(s.abs() <= 1e-10);
    }

    #[test]
    fn shifts_solve_the_system(seed in any::<u64>(), n in 2usize..=5) {
        let p = profile(seed, n);
        let pi = stationary_distribution(&p.q_limit).unwrap();
        let a = solve_shifts(&p.q_limit, &p.d, &pi).unwrap();
        prop_assert_eq!(a[0], 0.0);
        prop_assert!(shift_residual(&p.q_limit, &p.d, &a) <= 1e-10);
    }

    #[test]
    fn two_paths_to_uv_agree(seed in any::<u64>(), n in 2usize..=5) {
        let p = profile(seed, n);
        let rep = classify(&p).unwrap();
        let t = transform_to_lamperti(&p, rep.a.as_ref().unwrap()).unwrap();
        let (u, v) = lamperti_uv(&rep.pi, &t.c, &t.s2);
        prop_assert!((u - rep.u.unwrap()).abs() <= 1e-10);
        prop_assert!((v - rep.v.unwrap()).abs() <= 1e-10);
        // and via the Lamperti classifier on the transformed constants
        let lam = DriftProfile::lamperti(p.q_limit.clone(), t.c.clone(), t.s2.clone()).unwrap();
        let r2 = classify(&lam).unwrap();
        prop_assert_eq!(r2.verdict, rep.verdict);
    }

    #[test]
    fn verdict_invariant_under_relabelling(seed in any::<u64>(), n in 2usize..=5, rot in 0usize..5) {
        let p = profile(seed, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(rot % n);
        perm.swap(0, n - 1);
        let r1 = classify(&p).unwrap();
        let r2 = classify(&p.permuted(&perm).unwrap()).unwrap();
        prop_assert_eq!(r1.verdict, r2.verdict);
        prop_assert!((r1.u.unwrap() - r2.u.unwrap()).abs() <= 1e-9);
        prop_assert!((r1.v.unwrap() - r2.v.unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn lamperti_matches_direct_sign_tests(seed in any::<u64>(), n in 2usize..=5) {
        let base = profile(seed, n);
        let mut rng = stream_rng(seed, 1);
        use rand::Rng;
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s2: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let lam = DriftProfile::lamperti(base.q_limit.clone(), c.clone(), s2.clone()).unwrap();
        let rep = classify(&lam).unwrap();
        let (u, v) = lamperti_uv(&rep.pi, &c, &s2);
        prop_assume!((u.abs() - v).abs() > 1e-6);
        prop_assert_eq!(rep.verdict, direct_verdict(u, v));
        // the generalized path with d = 0, gamma = 0 gives the same answer
        let zeros = vec![vec![0.0; n]; n];
        let gen = DriftProfile::generalized(base.q_limit.clone(), zeros.clone(), vec![0.0; n], c, s2, zeros).unwrap();
        let r2 = classify(&gen).unwrap();
        prop_assert_eq!(r2.verdict, rep.verdict);
        prop_assert_eq!(r2.u, rep.u);
        prop_assert_eq!(r2.v, rep.v);
    }

    #[test]
    fn theta_star_strictly_decreasing_in_u(v in 0.01f64..10.0, u1 in -20.0f64..20.0, du in 1e-6f64..5.0) {
        let a = moment_threshold(u1, v).unwrap();
        let b = moment_threshold(u1 + du, v).unwrap();
        prop_assert!(b < a);
        prop_assert_eq!(moment_threshold(0.0, v).unwrap(), 0.5);
    }
}

#[test]
fn degenerate_variance_is_an_error() {
    assert!(matches!(moment_threshold(0.0, 0.0), Err(Error::DegenerateVariance(_))));
}

#[test]
fn crw_constants_are_closed_form() {
    for q in [0.3, 0.5, 0.7] {
        for c in [-2.0, -0.5, 0.0, 0.5, 2.0] {
            let r = classify(&CorrelatedRw::symmetric(q, c).unwrap().drift_profile()).unwrap();
            assert_eq!(r.regime, Regime::GeneralizedLamperti);
            assert!((r.u.unwrap() - c / (1.0 - q)).abs() < 1e-12);
            assert!((r.v.unwrap() - q / (1.0 - q)).abs() < 1e-12);
        }
    }
}
