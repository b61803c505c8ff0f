use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Gaussian, IncrementLaw, TableLaw};
use crate::error::{Error, Result};
use crate::lattice::{support_membership, LatticeSpec};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LltTarget {
    /// `n^{-1/2} S_n` on `n^{-1/2}(n b + H Z^d)`.
    Walk,
    /// `n^{-1/2} G_n` on `n^{-3/2}(n(n+1)/2 b + H Z^d)`.
    Com,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LltOptions {
    /// Samples per random stream; the unit of parallel work.
    pub chunk: usize,
    /// Bulk region: Mahalanobis distance from the mode at most this.
    pub bulk_radius: f64,
    /// Consecutive bulk points are merged until a bin expects this many samples.
    pub min_expected: f64,
    /// Largest accepted `|z|` per bin.
    pub z_limit: f64,
    /// Enumerate every bulk lattice point when the bounding box has at most
    /// this many; otherwise only observed points are reported.
    pub max_enumerate: usize,
    pub min_samples: usize,
}

impl Default for LltOptions {
    fn default() -> Self {
        Self {
            chunk: 100_000,
            bulk_radius: 2.0,
            min_expected: 100.0,
            z_limit: 3.0,
            max_enumerate: 1_000_000,
            min_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LltPoint {
    /// Integer lattice coordinates.
    pub k: Vec<i64>,
    /// Scaled position on the lattice.
    pub x: Vec<f64>,
    pub count: u64,
    pub empirical: f64,
    /// `(n^{delta d} / h) * empirical`, with `delta = 1/2` (walk) or `3/2` (com).
    pub scaled: f64,
    pub density: f64,
    pub discrepancy: f64,
    /// Monte Carlo standard error of `scaled` under the density prediction.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LltBin {
    pub first: Vec<i64>,
    pub last: Vec<i64>,
    pub n_points: usize,
    pub observed: u64,
    pub expected: f64,
    pub relative_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LltReport {
    pub n: u64,
    pub target: LltTarget,
    pub n_samples: u64,
    pub lattice: LatticeSpec,
    pub scaling: f64,
    /// Mode of the limit density: `sqrt(n) mu` (walk), `(n+1)/(2 sqrt(n)) mu` (com).
    pub shift: Vec<f64>,
    /// Sum of the empirical pmf over all observed points.
    pub empirical_mass: f64,
    /// Bulk lattice points in lexicographic order of `k`.
    pub points: Vec<LltPoint>,
    /// `sup |scaled - density|` over all observed points.
    pub sup_discrepancy: f64,
    pub sup_discrepancy_bulk: f64,
    pub bins: Vec<LltBin>,
    pub max_abs_z: f64,
    pub failing_bins: usize,
    pub z_limit: f64,
    pub passed: bool,
}

struct Geometry {
    inv: nalgebra::DMatrix<f64>,
    h: nalgebra::DMatrix<f64>,
    offset: Vec<f64>, // c b, with c = n or n(n+1)/2
    scale: f64,       // n^{-1/2} or n^{-3/2}
}

impl Geometry {
    fn position(&self, k: &[i64]) -> Vec<f64> {
        let kv = DVector::from_iterator(k.len(), k.iter().map(|&v| v as f64));
        let hk = &self.h * kv;
        hk.iter().zip(&self.offset).map(|(a, b)| (a + b) * self.scale).collect()
    }
}

fn histogram_chunk(
    law: &TableLaw,
    geo: &Geometry,
    n: u64,
    target: LltTarget,
    samples: usize,
    seed: u64,
    chunk: u64,
) -> Result<HashMap<Vec<i64>, u64>> {
    let d = law.dim();
    let mut rng = stream_rng(seed, chunk);
    let mut hist: HashMap<Vec<i64>, u64> = HashMap::new();
    let mut s = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut key = vec![0i64; d];
    let mut v = DVector::zeros(d);
    for _ in 0..samples {
        s.iter_mut().for_each(|a| *a = 0.0);
        y.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..n {
            let p = law.point(law.sample_index(&mut rng));
            for j in 0..d {
                s[j] += p[j];
                y[j] += s[j];
            }
        }
        let t = match target {
            LltTarget::Walk => &s,
            LltTarget::Com => &y,
        };
        for j in 0..d {
            v[j] = t[j] - geo.offset[j];
        }
        let kc = &geo.inv * &v;
        for j in 0..d {
            let r = kc[j].round();
            if (kc[j] - r).abs() > 1e-9 {
                return Err(Error::OffLattice {
                    n,
                    coords: kc.iter().cloned().collect(),
                });
            }
            key[j] = r as i64;
        }
        match hist.get_mut(key.as_slice()) {
            Some(c) => *c += 1,
            None => {
                hist.insert(key.clone(), 1);
            }
        }
    }
    Ok(hist)
}

/// Monte Carlo check of the local limit theorem for the walk or its centre
/// of mass at time `n`.
///
/// Samples are keyed by integer lattice coordinates; a sample off the
/// declared lattice is a hard [`Error::OffLattice`]. Chunk `k` of `chunk`
/// samples uses random stream `k`, and chunk histograms are merged in index
/// order, so the report does not depend on the thread count.
pub fn llt_check(
    law: &IncrementLaw,
    lattice: &LatticeSpec,
    n: u64,
    n_samples: u64,
    seed: u64,
    target: LltTarget,
    opts: &LltOptions,
) -> Result<LltReport> {
    let law = match law {
        IncrementLaw::Table(t) => t,
        IncrementLaw::HeavyTail(_) => {
            return Err(Error::Unsupported("the Gaussian local limit check needs a finite-variance table law".into()))
        }
    };
    let d = law.dim();
    if lattice.dim() != d {
        return Err(Error::Config(format!("law has dimension {d}, lattice {}", lattice.dim())));
    }
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    // An increment off b + H Z^d puts S_n off n b + H Z^d for some n even
    // when the requested n happens to land back on it.
    if !support_membership(law, lattice) {
        let coords = law
            .points()
            .iter()
            .map(|x| lattice.coords(&x.iter().zip(&lattice.b).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .find(|k| k.iter().any(|c| (c - c.round()).abs() > 1e-9))
            .unwrap_or_default();
        return Err(Error::OffLattice { n: 1, coords });
    }
    if (n_samples as usize) < opts.min_samples {
        return Err(Error::Config(format!(
            "need at least {} samples, got {n_samples}",
            opts.min_samples
        )));
    }
    let nf = n as f64;
    let mu = law.mean();
    let cov = law.covariance();
    let (c, scale, limit_cov, shift_w, delta) = match target {
        LltTarget::Walk => (nf, nf.powf(-0.5), cov.clone(), nf.sqrt(), 0.5),
        LltTarget::Com => (0.5 * nf * (nf + 1.0), nf.powf(-1.5), &cov / 3.0, (nf + 1.0) / (2.0 * nf.sqrt()), 1.5),
    };
    let gauss = Gaussian::new(&limit_cov)?;
    let shift: Vec<f64> = mu.iter().map(|m| m * shift_w).collect();
    let scaling = nf.powf(delta * d as f64) / lattice.h;
    let geo = Geometry {
        inv: lattice.inverse(),
        h: lattice.matrix(),
        offset: lattice.b.iter().map(|b| b * c).collect(),
        scale,
    };

    let chunk = opts.chunk.max(1) as u64;
    let n_chunks = n_samples.div_ceil(chunk);
    let parts = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let m = chunk.min(n_samples - k * chunk) as usize;
            histogram_chunk(law, &geo, n, target, m, seed, k)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut hist: HashMap<Vec<i64>, u64> = HashMap::new();
    for part in parts {
        for (k, v) in part {
            *hist.entry(k).or_insert(0) += v;
        }
    }

    let total = n_samples as f64;
    let centred = |x: &[f64]| -> Vec<f64> { x.iter().zip(&shift).map(|(a, b)| a - b).collect() };
    let in_bulk = |x: &[f64]| gauss.mahalanobis2(&centred(x)) <= opts.bulk_radius * opts.bulk_radius;

    let mut sup_all: f64 = 0.0;
    let empirical_mass = hist.values().sum::<u64>() as f64 / total;
    for (k, &cnt) in &hist {
        let x = geo.position(k);
        let p = cnt as f64 / total;
        sup_all = sup_all.max((scaling * p - gauss.density(&centred(&x))).abs());
    }

    // bulk lattice points: enumerate the bounding box of the bulk ellipsoid
    let half: Vec<f64> = (0..d).map(|j| opts.bulk_radius * limit_cov[(j, j)].sqrt()).collect();
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for corner in 0..(1usize << d) {
        let t: Vec<f64> = (0..d)
            .map(|j| {
                let sgn = if corner >> j & 1 == 1 { 1.0 } else { -1.0 };
                (shift[j] + sgn * half[j]) / scale - geo.offset[j]
            })
            .collect();
        let kc = &geo.inv * DVector::from_vec(t);
        for j in 0..d {
            lo[j] = lo[j].min(kc[j].floor() as i64 - 1);
            hi[j] = hi[j].max(kc[j].ceil() as i64 + 1);
        }
    }
    let box_size = (0..d).try_fold(1usize, |acc, j| acc.checked_mul((hi[j] - lo[j] + 1) as usize));
    let mut keys: Vec<Vec<i64>> = match box_size {
        Some(sz) if sz <= opts.max_enumerate => {
            let mut ks = Vec::with_capacity(sz);
            let mut cur = lo.clone();
            loop {
                ks.push(cur.clone());
                let mut j = 0;
                loop {
                    if j == d {
                        break;
                    }
                    cur[j] += 1;
                    if cur[j] <= hi[j] {
                        break;
                    }
                    cur[j] = lo[j];
                    j += 1;
                }
                if j == d {
                    break;
                }
            }
            ks
        }
        _ => hist.keys().cloned().collect(),
    };
    keys.retain(|k| in_bulk(&geo.position(k)));
    keys.sort();

    let mut points = Vec::with_capacity(keys.len());
    let mut sup_bulk: f64 = 0.0;
    for k in keys {
        let x = geo.position(&k);
        let count = hist.get(&k).copied().unwrap_or(0);
        let p = count as f64 / total;
        let dens = gauss.density(&centred(&x));
        let p_pred = dens / scaling;
        let disc = (scaling * p - dens).abs();
        sup_bulk = sup_bulk.max(disc);
        points.push(LltPoint {
            k,
            x,
            count,
            empirical: p,
            scaled: scaling * p,
            density: dens,
            discrepancy: disc,
            se: scaling * (p_pred * (1.0 - p_pred).max(0.0) / total).sqrt(),
        });
    }

    let mut bins = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let mut j = i;
        let (mut obs, mut exp) = (0u64, 0.0);
        while j < points.len() {
            obs += points[j].count;
            exp += total * points[j].density / scaling;
            j += 1;
            if exp >= opts.min_expected {
                break;
            }
        }
        if exp < opts.min_expected && !bins.is_empty() {
            // fold a short tail into the previous bin
            let last: &mut LltBin = bins.last_mut().unwrap();
            last.observed += obs;
            last.expected += exp;
            last.n_points += j - i;
            last.last = points[j - 1].k.clone();
        } else {
            bins.push(LltBin {
                first: points[i].k.clone(),
                last: points[j - 1].k.clone(),
                n_points: j - i,
                observed: obs,
                expected: exp,
                relative_error: 0.0,
                z: 0.0,
            });
        }
        i = j;
    }
    for b in &mut bins {
        let p = b.expected / total;
        b.relative_error = b.observed as f64 / b.expected - 1.0;
        b.z = (b.observed as f64 - b.expected) / (b.expected * (1.0 - p)).sqrt();
    }
    let max_abs_z = bins.iter().map(|b| b.z.abs()).fold(0.0, f64::max);
    let failing_bins = bins.iter().filter(|b| b.z.abs() > opts.z_limit).count();
    Ok(LltReport {
        n,
        target,
        n_samples,
        lattice: lattice.clone(),
        scaling,
        shift,
        empirical_mass,
        points,
        sup_discrepancy: sup_all,
        sup_discrepancy_bulk: sup_bulk,
        passed: failing_bins == 0 && !bins.is_empty(),
        bins,
        max_abs_z,
        failing_bins,
        z_limit: opts.z_limit,
    })
}

/// Exact law of `S_n` (walk) or `Y_n = S_1 + ... + S_n` (com) for a
/// one-dimensional law with integer support, by convolution of
/// `Y_n = sum_i (n - i + 1) X_i`. Returns `(min value, pmf)`.
pub fn exact_pmf_1d(law: &TableLaw, n: u64, target: LltTarget) -> Result<(i64, Vec<f64>)> {
    if law.dim() != 1 {
        return Err(Error::Unsupported("exact pmf is only available in one dimension".into()));
    }
    let pts: Vec<(i64, f64)> = law
        .points()
        .iter()
        .zip(law.probs())
        .map(|(x, &p)| {
            if x[0].fract() != 0.0 {
                Err(Error::Unsupported("exact pmf needs integer support".into()))
            } else {
                Ok((x[0] as i64, p))
            }
        })
        .collect::<Result<_>>()?;
    let mut lo = 0i64;
    let mut pmf = vec![1.0];
    for i in 1..=n as i64 {
        let w = match target {
            LltTarget::Walk => 1,
            LltTarget::Com => n as i64 - i + 1,
        };
        let min_step = pts.iter().map(|&(x, _)| x * w).min().unwrap();
        let max_step = pts.iter().map(|&(x, _)| x * w).max().unwrap();
        let mut next = vec![0.0; pmf.len() + (max_step - min_step) as usize];
        for (idx, &p) in pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &(x, q) in &pts {
                next[idx + (x * w - min_step) as usize] += p * q;
            }
        }
        lo += min_step;
        pmf = next;
    }
    Ok((lo, pmf))
}
