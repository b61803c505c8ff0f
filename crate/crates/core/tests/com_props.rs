use halfstrip_core::com::{
    com_trajectory, llt_check, step_com, HeavyTail, IncrementLaw, LltOptions, LltTarget, TableLaw,
};
use halfstrip_core::lattice::LatticeSpec;
use halfstrip_core::rng::stream_rng;
use halfstrip_core::Error;
use proptest::prelude::*;

fn skewed_law() -> TableLaw {
    TableLaw::new(vec![vec![-1.0], vec![0.0], vec![2.0]], vec![0.3, 0.3, 0.4]).unwrap()
}

proptest! {
    #[test]
    fn centre_of_mass_is_weighted_sum(xs in prop::collection::vec(-10.0f64..10.0, 1..60)) {
        // G_n = (1/n) sum_i (n - i + 1) X_i
        let n = xs.len();
        let mut s = 0.0;
        let mut g = vec![0.0];
        for (k, x) in xs.iter().enumerate() {
            s += x;
            g = step_com(&g, &[s], k as u64);
        }
        let direct: f64 = xs.iter().enumerate().map(|(i, x)| (n - i) as f64 * x).sum::<f64>() / n as f64;
        prop_assert!((g[0] - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        let bound = xs.iter().map(|x| x.abs()).fold(0.0, f64::max) * (n + 1) as f64 / 2.0;
        prop_assert!(g[0].abs() <= bound + 1e-9);
    }
}

#[test]
fn law_of_large_numbers_halves_the_drift() {
    let law = IncrementLaw::Table(skewed_law());
    let mu = 0.5;
    let n = 100_000u64;
    let cps = com_trajectory(&law, &[n], 3, 0);
    assert!((cps[0].g[0] / n as f64 - mu / 2.0).abs() < 0.01, "{}", cps[0].g[0] / n as f64);
}

#[test]
fn clt_covariance_is_a_third() {
    let law = TableLaw::lazy_ssrw(2).unwrap();
    let m = law.covariance();
    let n = 2000u64;
    let gs: Vec<Vec<f64>> = (0..4000).map(|k| com_trajectory(&IncrementLaw::Table(law.clone()), &[n], 11, k)[0].g.clone()).collect();
    for a in 0..2 {
        for b in 0..2 {
            let c: f64 = gs.iter().map(|g| g[a] * g[b]).sum::<f64>() / gs.len() as f64 / n as f64;
            let expect = m[(a, b)] / 3.0;
            assert!((c - expect).abs() < 0.1 * m[(0, 0)] / 3.0, "({a},{b}) {c} vs {expect}");
        }
    }
}

#[test]
fn off_lattice_law_is_rejected() {
    let law = IncrementLaw::Table(TableLaw::ssrw(1).unwrap());
    let spec = LatticeSpec::new(vec![vec![1.0]], vec![0.5]).unwrap();
    let err = llt_check(&law, &spec, 10, 100_000, 1, LltTarget::Walk, &LltOptions::default()).unwrap_err();
    assert!(matches!(err, Error::OffLattice { .. }), "{err}");
}

#[test]
fn heavy_tail_is_symmetric_with_power_tail() {
    let h = HeavyTail::new(0.5).unwrap();
    for k in 1..50 {
        assert!((h.pmf(k) - h.pmf(-k)).abs() <= 1e-15);
    }
    assert!((h.pmf(100) / h.pmf(200) - 2f64.powf(1.5)).abs() < 1e-9);
    let mut rng = stream_rng(4, 0);
    let xs: Vec<i64> = (0..200_000).map(|_| h.sample(&mut rng)).collect();
    let pos = xs.iter().filter(|&&x| x > 0).count() as f64;
    let neg = xs.iter().filter(|&&x| x < 0).count() as f64;
    assert!((pos - neg).abs() / (pos + neg) < 0.01);
    // P(|X| > k) ~ C k^(-alpha): the ratio over a factor 16 is about 4
    let above = |k: i64| xs.iter().filter(|x| x.abs() > k).count() as f64;
    let r = above(10) / above(160);
    assert!((r - 4.0).abs() < 0.4, "{r}");
}
