//! Lattice data `(H, b, h)` for increment laws supported on `b + H Z^d`, and
//! characteristic-function checks of minimality.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::com::TableLaw;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const COORD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    #[serde(rename = "H")]
    pub h_matrix: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// `|det H|`
    pub h: f64,
}

/// Exact determinant of an integer matrix (fraction-free elimination).
fn bareiss(m: &[Vec<f64>]) -> Option<i128> {
    let n = m.len();
    let mut a: Vec<Vec<i128>> = Vec::with_capacity(n);
    for row in m {
        let mut r = Vec::with_capacity(n);
        for &v in row {
            if v.fract() != 0.0 || v.abs() > 1e9 {
                return None;
            }
            r.push(v as i128);
        }
        a.push(r);
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| a[i][k] != 0) else {
                return Some(0);
            };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    Some(sign * a[n - 1][n - 1])
}

impl LatticeSpec {
    /// Builds the lattice from the rows of `H`, computing `h = |det H|`
    /// (exactly when `H` has integer entries).
    pub fn new(h_rows: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let d = h_rows.len();
        if d == 0 || h_rows.iter().any(|r| r.len() != d) || b.len() != d {
            return Err(Error::Config("H must be d x d and b of length d".into()));
        }
        if h_rows.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Config("lattice entries must be finite".into()));
        }
        let h = match bareiss(&h_rows) {
            Some(det) => det.unsigned_abs() as f64,
            None => DMatrix::from_fn(d, d, |i, j| h_rows[i][j]).determinant().abs(),
        };
        if !(h > 1e-12) {
            return Err(Error::Singular("H is not invertible".into()));
        }
        Ok(Self { h_matrix: h_rows, b, h })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.h_matrix[i][j])
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.matrix().try_inverse().expect("H invertible by construction")
    }

    /// Basis `2 pi (H^T)^{-1}` of the dual lattice `S_H`.
    pub fn dual_basis(&self) -> DMatrix<f64> {
        self.inverse().transpose() * (2.0 * PI)
    }

    /// `H^{-1} v`.
    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        (self.inverse() * DVector::from_column_slice(v)).iter().cloned().collect()
    }
}

/// Which built-in lattice construction to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeFamily {
    Ssrw,
    LazySsrw,
}

/// Minimal lattice of the lazy walk (`H = I`, `b = 0`, `h = 1`) or of the
/// simple symmetric walk (`h = 2` in every dimension).
///
/// For the simple walk: `d = 1` uses `H = [2]`, `b = -1`; odd `d = 2n-1` uses
/// the circulant `h_ij = 1` iff `i - j = 0` or `n (mod 2n-1)` with `b = -1`;
/// even `d = 2n` uses `h_ij = 1` iff `j - i = 0` or `1 (mod 2n)`, except
/// `h_(2n,1) = -1`, with `b = (-1, ..., -1, 0)`.
pub fn builtin_lattice(family: LatticeFamily, d: usize) -> Result<LatticeSpec> {
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    match family {
        LatticeFamily::LazySsrw => {
            let h = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            LatticeSpec::new(h, vec![0.0; d])
        }
        LatticeFamily::Ssrw if d == 1 => LatticeSpec::new(vec![vec![2.0]], vec![-1.0]),
        LatticeFamily::Ssrw if d % 2 == 1 => {
            let n = (d + 1) / 2;
            let h = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            let r = (i + d - j) % d;
                            if r == 0 || r == n {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            LatticeSpec::new(h, vec![-1.0; d])
        }
        LatticeFamily::Ssrw => {
            let h = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| {
                            if i == d - 1 && j == 0 {
                                -1.0
                            } else {
                                let r = (j + d - i) % d;
                                if r == 0 || r == 1 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            let mut b = vec![-1.0; d];
            b[d - 1] = 0.0;
            LatticeSpec::new(h, b)
        }
    }
}

/// Characteristic function `E exp(i t^T X)`.
pub fn phi(law: &TableLaw, t: &[f64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, p) in law.points().iter().zip(law.probs()) {
        let a: f64 = x.iter().zip(t).map(|(u, v)| u * v).sum();
        let (s, c) = a.sin_cos();
        re += p * c;
        im += p * s;
    }
    Complex64::new(re, im)
}

fn is_integral(v: &[f64]) -> bool {
    v.iter().all(|c| (c - c.round()).abs() <= COORD_TOL)
}

/// True iff every support point `x` (with positive mass) has
/// `H^{-1}(x - b)` integral within `1e-9`.
pub fn support_membership(law: &TableLaw, spec: &LatticeSpec) -> bool {
    if law.dim() != spec.dim() {
        return false;
    }
    let inv = spec.inverse();
    law.points().iter().zip(law.probs()).filter(|(_, p)| **p > 0.0).all(|(x, _)| {
        let v = DVector::from_iterator(x.len(), x.iter().zip(&spec.b).map(|(a, b)| a - b));
        is_integral((&inv * v).as_slice())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalityOptions {
    /// Points per axis of the fundamental-domain grid.
    pub grid: usize,
    /// Radius of the balls around `S_H` excluded from the search.
    pub rho: f64,
    /// Dual lattice points `k` in `{-r..r}^d` checked for `|phi| = 1`.
    pub periodic_range: i64,
    /// Above this dimension the grid is replaced by random sampling.
    pub max_grid_dim: usize,
    pub random_samples: usize,
    pub seed: u64,
    /// Tolerance on `|phi| = 1`.
    pub tol: f64,
}

impl Default for MinimalityOptions {
    fn default() -> Self {
        Self {
            grid: 201,
            rho: PI / 8.0,
            periodic_range: 2,
            max_grid_dim: 4,
            random_samples: 200_000,
            seed: 0,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub passed: bool,
    pub membership: bool,
    /// Largest `1 - |phi|` over the sampled points of `S_H`.
    pub dual_defect: f64,
    /// `1 - max |phi|` over the searched region.
    pub margin: f64,
    pub max_abs_phi: f64,
    /// Point attaining `max |phi|` outside the excluded balls.
    pub witness: Vec<f64>,
    pub points_checked: usize,
    pub sampling: String,
    pub h: f64,
}

fn integer_box(d: usize, r: i64) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let c = (idx % side) as i64 - r;
                    idx /= side;
                    c
                })
                .collect()
        })
        .collect()
}

/// Checks that `(H, b)` is the minimal lattice of `law`: support membership,
/// `|phi| = 1` on `S_H = 2 pi (H^T)^{-1} Z^d`, and `|phi| < 1` on the
/// fundamental domain `2 pi (H^T)^{-1} [-1/2, 1/2]^d` away from `S_H`.
///
/// The search grid (or, above `max_grid_dim`, random sample) always contains
/// the half-integer points `{-1/2, 0, 1/2}^d` of the domain.
pub fn minimality_check(law: &TableLaw, spec: &LatticeSpec, opts: &MinimalityOptions) -> Result<MinimalityReport> {
    let d = spec.dim();
    if law.dim() != d {
        return Err(Error::Config(format!("law has dimension {}, lattice {d}", law.dim())));
    }
    let membership = support_membership(law, spec);
    let basis = spec.dual_basis();
    let to_t = |s: &[f64]| -> Vec<f64> { (&basis * DVector::from_column_slice(s)).iter().cloned().collect() };

    let mut dual_defect: f64 = 0.0;
    for k in integer_box(d, opts.periodic_range) {
        let kf: Vec<f64> = k.iter().map(|&v| v as f64).collect();
        dual_defect = dual_defect.max(1.0 - phi(law, &to_t(&kf)).norm());
    }

    let use_grid = d <= opts.max_grid_dim;
    if use_grid {
        if opts.grid < 3 || opts.grid % 2 == 0 {
            return Err(Error::Config("grid must be odd and at least 3".into()));
        }
        let col_max = (0..d).map(|j| basis.column(j).norm()).fold(0.0, f64::max);
        let spacing = col_max / (opts.grid - 1) as f64;
        if spacing > opts.rho {
            return Err(Error::Config(format!(
                "grid spacing {spacing:.4} exceeds the exclusion radius {:.4}; increase the grid",
                opts.rho
            )));
        }
    }

    let near: Vec<Vec<f64>> = integer_box(d, 1).iter().map(|k| to_t(&k.iter().map(|&v| v as f64).collect::<Vec<_>>())).collect();
    let excluded = |t: &[f64]| {
        near.iter()
            .any(|c| c.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < opts.rho * opts.rho)
    };

    let mut best = -1.0;
    let mut witness = vec![0.0; d];
    let mut checked = 0usize;
    let mut visit = |s: &[f64]| {
        let t = to_t(s);
        let a = phi(law, &t).norm();
        checked += 1;
        if a > best && !excluded(&t) {
            best = a;
            witness = t;
        }
    };
    // half-integer points first, so exact ties keep them as the witness
    for k in integer_box(d, 1) {
        let s: Vec<f64> = k.iter().map(|&v| 0.5 * v as f64).collect();
        visit(&s);
    }
    if use_grid {
        let g = opts.grid;
        let total = g.checked_pow(d as u32).ok_or_else(|| Error::Config("grid too large".into()))?;
        let mut s = vec![0.0; d];
        for mut idx in 0..total {
            for v in s.iter_mut() {
                *v = (idx % g) as f64 / (g - 1) as f64 - 0.5;
                idx /= g;
            }
            visit(&s);
        }
    } else {
        let mut rng = stream_rng(opts.seed, 0);
        let mut s = vec![0.0; d];
        for _ in 0..opts.random_samples {
            for v in s.iter_mut() {
                *v = rng.random::<f64>() - 0.5;
            }
            visit(&s);
        }
    }
    let max_abs_phi = best.max(0.0);
    let margin = 1.0 - max_abs_phi;
    Ok(MinimalityReport {
        passed: membership && dual_defect <= opts.tol && margin > opts.tol,
        membership,
        dual_defect,
        margin,
        max_abs_phi,
        witness,
        points_checked: checked,
        sampling: if use_grid { format!("grid {}^{d}", opts.grid) } else { format!("random {}", opts.random_samples) },
        h: spec.h,
    })
}

/// Largest deviation `| |phi(t + 2 pi (H^T)^{-1} k)| - |phi(t)| |` over the
/// given `t` and `k` in `{-r..r}^d`.
pub fn periodicity_defect(law: &TableLaw, spec: &LatticeSpec, ts: &[Vec<f64>], r: i64) -> f64 {
    let basis = spec.dual_basis();
    let mut worst: f64 = 0.0;
    for t in ts {
        let base = phi(law, t).norm();
        for k in integer_box(spec.dim(), r) {
            let shift = &basis * DVector::from_iterator(k.len(), k.iter().map(|&v| v as f64));
            let tt: Vec<f64> = t.iter().zip(shift.iter()).map(|(a, b)| a + b).collect();
            worst = worst.max((phi(law, &tt).norm() - base).abs());
        }
    }
    worst
}

/// Brute-force search for a coarser lattice: `H' = H A` with integer `A`
/// (entries in `-r..=r`, `|det A| >= 2`) and `b'` a support point, such that
/// the law is still supported on `b' + H' Z^d`. Returns the first found.
pub fn find_coarser_lattice(law: &TableLaw, spec: &LatticeSpec, r: i64) -> Option<LatticeSpec> {
    let d = spec.dim();
    let h = spec.matrix();
    let side = (2 * r + 1) as usize;
    let total = side.checked_pow((d * d) as u32)?;
    for mut idx in 0..total {
        let mut a = vec![vec![0.0; d]; d];
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v = (idx % side) as f64 - r as f64;
                idx /= side;
            }
        }
        match bareiss(&a) {
            Some(det) if det.abs() >= 2 => {}
            _ => continue,
        }
        let am = DMatrix::from_fn(d, d, |i, j| a[i][j]);
        let hp = &h * am;
        let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| hp[(i, j)]).collect()).collect();
        for (x0, p) in law.points().iter().zip(law.probs()) {
            if *p <= 0.0 {
                continue;
            }
            if let Ok(cand) = LatticeSpec::new(rows.clone(), x0.clone()) {
                if support_membership(law, &cand) {
                    return Some(cand);
                }
            }
        }
    }
    None
}

/// Minimal lattice of a one-dimensional law: `h` is the gcd of the support
/// differences (to `1e-9`), `b` the first support point.
pub fn minimal_lattice_1d(law: &TableLaw) -> Result<LatticeSpec> {
    if law.dim() != 1 {
        return Err(Error::Unsupported("minimal lattice search is only implemented for d = 1".into()));
    }
    let pts: Vec<f64> = law.points().iter().zip(law.probs()).filter(|(_, p)| **p > 0.0).map(|(x, _)| x[0]).collect();
    let b = pts[0];
    let mut g: f64 = 0.0;
    for &x in &pts[1..] {
        let mut a = (x - b).abs();
        let mut c = g;
        while c > COORD_TOL {
            let r = a % c;
            a = c;
            c = if r > c - COORD_TOL { 0.0 } else { r };
        }
        g = a;
    }
    if !(g > COORD_TOL) {
        return Err(Error::InvalidModel("degenerate law has no lattice span".into()));
    }
    LatticeSpec::new(vec![vec![g]], vec![b])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_values() {
        let s2 = TableLaw::ssrw(2).unwrap();
        let v = phi(&s2, &[PI, PI]);
        assert!((v.re + 1.0).abs() < 1e-15 && v.im.abs() < 1e-15);
        assert!((phi(&s2, &[0.0, 0.0]).re - 1.0).abs() < 1e-15);
        let lazy = TableLaw::lazy_ssrw(1).unwrap();
        assert!(phi(&lazy, &[PI]).norm() < 1e-15);
    }

    #[test]
    fn builtin_displays() {
        let l2 = builtin_lattice(LatticeFamily::Ssrw, 2).unwrap();
        assert_eq!(l2.h_matrix, vec![vec![1.0, 1.0], vec![-1.0, 1.0]]);
        assert_eq!(l2.b, vec![-1.0, 0.0]);
        let l3 = builtin_lattice(LatticeFamily::Ssrw, 3).unwrap();
        assert_eq!(l3.h_matrix, vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]]);
        let l4 = builtin_lattice(LatticeFamily::Ssrw, 4).unwrap();
        assert_eq!(
            l4.h_matrix,
            vec![
                vec![1.0, 1.0, 0.0, 0.0],
                vec![0.0, 1.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 1.0],
                vec![-1.0, 0.0, 0.0, 1.0]
            ]
        );
        assert_eq!(l4.b, vec![-1.0, -1.0, -1.0, 0.0]);
        let l5 = builtin_lattice(LatticeFamily::Ssrw, 5).unwrap();
        assert_eq!(
            l5.h_matrix,
            vec![
                vec![1.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0, 1.0]
            ]
        );
        for d in 1..=8 {
            assert_eq!(builtin_lattice(LatticeFamily::Ssrw, d).unwrap().h, 2.0, "d={d}");
            assert_eq!(builtin_lattice(LatticeFamily::LazySsrw, d).unwrap().h, 1.0);
        }
        let l1 = builtin_lattice(LatticeFamily::Ssrw, 1).unwrap();
        assert_eq!((l1.h_matrix[0][0], l1.b[0]), (2.0, -1.0));
    }

    #[test]
    fn membership() {
        let s2 = TableLaw::ssrw(2).unwrap();
        assert!(support_membership(&s2, &builtin_lattice(LatticeFamily::Ssrw, 2).unwrap()));
        assert!(support_membership(&s2, &builtin_lattice(LatticeFamily::LazySsrw, 2).unwrap()));
        let s3 = TableLaw::ssrw(3).unwrap();
        assert!(support_membership(&s3, &builtin_lattice(LatticeFamily::Ssrw, 3).unwrap()));
        let bad = LatticeSpec::new(vec![vec![2.0, 0.0], vec![0.0, 2.0]], vec![0.0, 0.0]).unwrap();
        assert!(!support_membership(&s2, &bad));
    }

    #[test]
    fn minimality_d2() {
        let opts = MinimalityOptions { grid: 101, ..Default::default() };
        let lazy = TableLaw::lazy_ssrw(2).unwrap();
        let id = builtin_lattice(LatticeFamily::LazySsrw, 2).unwrap();
        assert!(minimality_check(&lazy, &id, &opts).unwrap().passed);
        let s2 = TableLaw::ssrw(2).unwrap();
        let r = minimality_check(&s2, &id, &opts).unwrap();
        assert!(!r.passed);
        assert!(r.witness.iter().all(|w| ((w.abs() - PI) / (2.0 * PI)).fract().abs() < 1e-12));
        assert!(minimality_check(&s2, &builtin_lattice(LatticeFamily::Ssrw, 2).unwrap(), &opts).unwrap().passed);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let lazy = TableLaw::lazy_ssrw(2).unwrap();
        let id = builtin_lattice(LatticeFamily::LazySsrw, 2).unwrap();
        let opts = MinimalityOptions { grid: 11, ..Default::default() };
        assert!(matches!(minimality_check(&lazy, &id, &opts), Err(Error::Config(_))));
    }

    #[test]
    fn one_dimensional_gcd() {
        let law = TableLaw::new(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let l = minimal_lattice_1d(&law).unwrap();
        assert_eq!((l.h, l.b[0]), (2.0, -1.0));
        let law = TableLaw::new(vec![vec![0.5], vec![2.0], vec![3.5]], vec![0.2, 0.3, 0.5]).unwrap();
        assert!((minimal_lattice_1d(&law).unwrap().h - 1.5).abs() < 1e-12);
    }

    #[test]
    fn exact_det() {
        assert_eq!(bareiss(&[vec![2.0, 1.0], vec![1.0, 3.0]]), Some(5));
        assert_eq!(bareiss(&[vec![0.0, 1.0], vec![1.0, 0.0]]), Some(-1));
        assert_eq!(bareiss(&[vec![0.5]]), None);
    }
}
