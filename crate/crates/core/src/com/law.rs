use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::HeavyTail;
use crate::error::{Error, Result};

/// Finite-support increment law on `R^d`, sampled with Walker's alias method.
#[derive(Debug, Clone, Serialize)]
pub struct TableLaw {
    dim: usize,
    points: Vec<Vec<f64>>,
    probs: Vec<f64>,
    #[serde(skip)]
    alias_cut: Vec<f64>,
    #[serde(skip)]
    alias_idx: Vec<usize>,
}

impl TableLaw {
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != probs.len() {
            return Err(Error::InvalidModel("need one probability per support point".into()));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidModel("support points must share a positive dimension".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("pmf must be nonnegative and sum to 1 (sum {total})")));
        }
        let (alias_cut, alias_idx) = build_alias(&probs);
        Ok(Self {
            dim,
            points,
            probs,
            alias_cut,
            alias_idx,
        })
    }

    /// Simple symmetric random walk: `+-e_j` with probability `1/(2d)` each.
    pub fn ssrw(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        let mut pts = Vec::with_capacity(2 * d);
        for j in 0..d {
            for s in [-1.0, 1.0] {
                let mut p = vec![0.0; d];
                p[j] = s;
                pts.push(p);
            }
        }
        Self::new(pts, vec![1.0 / (2 * d) as f64; 2 * d])
    }

    /// Lazy walk: stays put with probability 1/2, otherwise an SSRW step.
    pub fn lazy_ssrw(d: usize) -> Result<Self> {
        let s = Self::ssrw(d)?;
        let mut pts = vec![vec![0.0; d]];
        pts.extend(s.points);
        let mut probs = vec![0.5];
        probs.extend(vec![1.0 / (4 * d) as f64; 2 * d]);
        Self::new(pts, probs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, p) in self.points.iter().zip(&self.probs) {
            for (a, v) in m.iter_mut().zip(x) {
                *a += p * v;
            }
        }
        m
    }

    /// `M = E[(X - mu)(X - mu)^T]`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for (x, p) in self.points.iter().zip(&self.probs) {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    c[(i, j)] += p * (x[i] - mu[i]) * (x[j] - mu[j]);
                }
            }
        }
        c
    }

    /// True if `X` and `-X` have the same law.
    pub fn is_symmetric(&self) -> bool {
        self.points.iter().zip(&self.probs).all(|(x, p)| {
            let neg: f64 = self
                .points
                .iter()
                .zip(&self.probs)
                .filter(|(y, _)| y.iter().zip(x).all(|(a, b)| (a + b).abs() < 1e-12))
                .map(|(_, q)| q)
                .sum();
            (neg - p).abs() < 1e-12
        })
    }

    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let r: u64 = rng.random();
        let n = self.probs.len() as u64;
        let k = (((r >> 32) * n) >> 32) as usize;
        let coin = (r & 0xFFFF_FFFF) as f64 * (1.0 / 4_294_967_296.0);
        if coin < self.alias_cut[k] {
            k
        } else {
            self.alias_idx[k]
        }
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }
}

fn build_alias(probs: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = probs.len();
    let mut scaled: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut cut = vec![1.0; n];
    let mut idx: Vec<usize> = (0..n).collect();
    let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
    while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
        cut[s] = scaled[s];
        idx[s] = l;
        scaled[l] -= 1.0 - scaled[s];
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    (cut, idx)
}

/// An increment law for the walk `S_n = X_1 + ... + X_n`.
#[derive(Debug, Clone)]
pub enum IncrementLaw {
    Table(TableLaw),
    /// Symmetric integer law with `P(X = k)` proportional to `|k|^(-1-alpha)`.
    HeavyTail(HeavyTail),
}

impl IncrementLaw {
    pub fn dim(&self) -> usize {
        match self {
            IncrementLaw::Table(t) => t.dim(),
            IncrementLaw::HeavyTail(_) => 1,
        }
    }

    /// Mean vector, when it exists.
    pub fn mean(&self) -> Option<Vec<f64>> {
        match self {
            IncrementLaw::Table(t) => Some(t.mean()),
            IncrementLaw::HeavyTail(_) => None,
        }
    }

    /// Covariance matrix, when it exists.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        match self {
            IncrementLaw::Table(t) => Some(t.covariance()),
            IncrementLaw::HeavyTail(_) => None,
        }
    }

    /// Adds one increment to `s`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, s: &mut [f64]) {
        match self {
            IncrementLaw::Table(t) => {
                let p = t.point(t.sample_index(rng));
                for (a, v) in s.iter_mut().zip(p) {
                    *a += v;
                }
            }
            IncrementLaw::HeavyTail(h) => s[0] += h.sample(rng) as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn builtin_moments() {
        let s = TableLaw::ssrw(3).unwrap();
        assert_eq!(s.mean(), vec![0.0; 3]);
        assert!((s.covariance() - DMatrix::identity(3, 3) / 3.0).norm() < 1e-15);
        let l = TableLaw::lazy_ssrw(2).unwrap();
        assert!((l.covariance() - DMatrix::identity(2, 2) / 4.0).norm() < 1e-15);
        assert!(s.is_symmetric() && l.is_symmetric());
    }

    #[test]
    fn rejects_bad_pmf() {
        assert!(TableLaw::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(TableLaw::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn alias_frequencies() {
        let law = TableLaw::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.1, 0.6, 0.3]).unwrap();
        let mut rng = stream_rng(5, 0);
        let mut counts = [0usize; 3];
        let n = 200_000;
        for _ in 0..n {
            counts[law.sample_index(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(law.probs()) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }
}
