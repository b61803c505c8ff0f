//! Lattice random walks `S_n` and their centre of mass
//! `G_n = (S_1 + ... + S_n) / n`.

mod density;
mod escape;
mod heavy_tail;
mod law;
mod llt;
mod recurrence;
mod stable;

pub use density::{gaussian_density_com, gaussian_density_walk, Gaussian};
pub use escape::{escape_exponent, geometric_checkpoints, EscapeFit};
pub use heavy_tail::{sample_heavy_tail_increment, zeta, HeavyTail, DEFAULT_TABLE};
pub use law::{IncrementLaw, TableLaw};
pub use llt::{exact_pmf_1d, llt_check, LltBin, LltOptions, LltPoint, LltReport, LltTarget};
pub use recurrence::{recurrence_probe_1d, RecurrenceProbe};
pub use stable::{
    stable_density, stable_density_com, stable_density_com_direct, stable_density_with, stable_tail, StableOptions,
    StableRoute,
};

use serde::Serialize;

use crate::rng::stream_rng;

/// `G_{n+1} = G_n + (S_{n+1} - G_n) / (n + 1)`, with `G_0 = 0`.
pub fn step_com(g: &[f64], s_next: &[f64], n: u64) -> Vec<f64> {
    let mut out = g.to_vec();
    step_com_in_place(&mut out, s_next, n);
    out
}

#[inline]
pub fn step_com_in_place(g: &mut [f64], s_next: &[f64], n: u64) {
    let w = 1.0 / (n + 1) as f64;
    for (a, s) in g.iter_mut().zip(s_next) {
        *a += (s - *a) * w;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComCheckpoint {
    pub n: u64,
    pub s: Vec<f64>,
    /// `Y_n / n` with `Y_n = S_1 + ... + S_n` accumulated directly.
    pub g: Vec<f64>,
    /// `G_n` from the one-step recursion.
    pub g_recursive: Vec<f64>,
}

/// One trajectory of the walk under `law`, recorded at `checkpoints`
/// (ascending). Uses random stream `stream` of `seed`.
pub fn com_trajectory(law: &IncrementLaw, checkpoints: &[u64], seed: u64, stream: u64) -> Vec<ComCheckpoint> {
    let d = law.dim();
    let mut rng = stream_rng(seed, stream);
    let mut s = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut out = Vec::with_capacity(checkpoints.len());
    let n_max = checkpoints.last().copied().unwrap_or(0);
    let mut next = 0;
    for n in 1..=n_max {
        law.step(&mut rng, &mut s);
        for (a, v) in y.iter_mut().zip(&s) {
            *a += v;
        }
        step_com_in_place(&mut g, &s, n - 1);
        while next < checkpoints.len() && checkpoints[next] == n {
            out.push(ComCheckpoint {
                n,
                s: s.clone(),
                g: y.iter().map(|v| v / n as f64).collect(),
                g_recursive: g.clone(),
            });
            next += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_basics() {
        assert_eq!(step_com(&[0.0], &[1.0], 0), vec![1.0]);
        assert_eq!(step_com(&[1.0], &[3.0], 1), vec![2.0]);
        let zero = IncrementLaw::Table(TableLaw::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap());
        for c in com_trajectory(&zero, &[1, 10, 100], 1, 0) {
            assert_eq!(c.g, vec![0.0, 0.0]);
            assert_eq!(c.g_recursive, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn recursion_matches_average() {
        let law = IncrementLaw::Table(TableLaw::ssrw(2).unwrap());
        let cps: Vec<u64> = (1..=10).map(|k| k * 100).collect();
        for c in com_trajectory(&law, &cps, 3, 0) {
            for (a, b) in c.g.iter().zip(&c.g_recursive) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn range_bound() {
        let law = IncrementLaw::Table(TableLaw::ssrw(1).unwrap());
        let mut max_s: f64 = 0.0;
        let traj = com_trajectory(&law, &(1..=2000).collect::<Vec<_>>(), 8, 0);
        for c in traj {
            max_s = max_s.max(c.s[0].abs());
            assert!(c.g[0].abs() <= max_s + 1e-12);
        }
    }
}
