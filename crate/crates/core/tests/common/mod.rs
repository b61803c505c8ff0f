#![allow(dead_code)]

use halfstrip_core::classifier::{solve_shifts, stationary_distribution};
use halfstrip_core::model::DriftProfile;
use rand::Rng;

/// Random critical generalized-Lamperti profile on `n` lines: strictly
/// positive `q` (so irreducible), `d` projected onto `sum d_i pi_i = 0`,
/// zero-sum `gamma` rows, `d_ij` with row sums `d_i`, and `t_i^2` large
/// enough that every transformed `s_i^2` is positive.
pub fn random_profile<R: Rng>(rng: &mut R, n: usize) -> DriftProfile {
    let mut q: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.05..1.0)).collect()).collect();
    for row in &mut q {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let pi = stationary_distribution(&q).unwrap();
    let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m: f64 = d.iter().zip(&pi).map(|(a, b)| a * b).sum();
    d.iter_mut().for_each(|v| *v -= m);
    let mut gamma: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
    for row in &mut gamma {
        let s = row.iter().sum::<f64>() / n as f64;
        row.iter_mut().for_each(|v| *v -= s);
    }
    let mut cross: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
    for i in 0..n {
        let s: f64 = cross[i].iter().sum();
        cross[i][i] += d[i] - s;
    }
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut t2: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let a = solve_shifts(&q, &d, &pi).unwrap();
    for i in 0..n {
        let s2 = t2[i]
            + 2.0 * (0..n).map(|j| a[j] * cross[i][j]).sum::<f64>()
            + (0..n).map(|j| (a[j] * a[j] - a[i] * a[i]) * q[i][j]).sum::<f64>();
        if s2 < 0.2 {
            t2[i] += 0.2 - s2;
        }
    }
    DriftProfile::generalized(q, gamma, d, e, t2, cross).unwrap()
}
