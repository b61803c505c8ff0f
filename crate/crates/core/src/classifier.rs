//! Closed-form recurrence classification of half-strip chains from their
//! asymptotic constants.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriftProfile, Regime};

/// Tolerance on `sum_i d_i pi_i` for the shift system to count as solvable.
pub const CRITICAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Transient,
    NullRecurrent,
    PositiveRecurrent,
    /// `|U| = V` up to the dead-band; null recurrent under the strengthened
    /// rate assumptions on `q_ij(x)` and `mu_i(x)`.
    BoundaryNullRecurrent,
}

impl Verdict {
    pub fn is_null(self) -> bool {
        matches!(self, Verdict::NullRecurrent | Verdict::BoundaryNullRecurrent)
    }
}

/// Fails with [`Error::Reducible`] unless every line reaches every other one
/// through strictly positive entries of `q`.
pub fn check_irreducible(q: &[Vec<f64>]) -> Result<()> {
    let n = q.len();
    for from in 0..n {
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut stack = vec![from];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if q[i][j] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        let unreachable: Vec<usize> = (0..n).filter(|&j| !seen[j]).collect();
        if !unreachable.is_empty() {
            return Err(Error::Reducible { from, unreachable });
        }
    }
    Ok(())
}

fn to_matrix(q: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = q.len();
    if n == 0 || q.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidModel("expected a non-empty square matrix".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| q[i][j]))
}

/// Unique stationary distribution of an irreducible stochastic matrix,
/// from `(Q^T - I) pi = 0` with `sum pi = 1` appended, solved by SVD.
pub fn stationary_distribution(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let qm = to_matrix(q)?;
    for (i, row) in q.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if row.iter().any(|v| *v < 0.0 || !v.is_finite()) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("row {i} is not stochastic (sum {s})")));
        }
    }
    check_irreducible(q)?;
    let n = q.len();
    // pi (I - Q + 1 1^T) = 1^T
    let m = (DMatrix::identity(n, n) - qm).add_scalar(1.0).transpose();
    let ones = DVector::from_element(n, 1.0);
    let lu = m.clone().lu();
    let mut pi = lu.solve(&ones).ok_or_else(|| Error::Singular("stationary system is singular".into()))?;
    let r = &ones - &m * &pi;
    pi += lu.solve(&r).ok_or_else(|| Error::Singular("stationary system is singular".into()))?;
    let total: f64 = pi.iter().sum();
    let mut pi: Vec<f64> = pi.iter().map(|v| v / total).collect();
    if pi.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Singular(format!("stationary vector not positive: {pi:?}")));
    }
    // One power step polishes rounding without moving off the simplex.
    let stepped: Vec<f64> = (0..n).map(|j| (0..n).map(|i| pi[i] * q[i][j]).sum()).collect();
    let s: f64 = stepped.iter().sum();
    pi = stepped.into_iter().map(|v| v / s).collect();
    Ok(pi)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `d_i + sum_j (a_j - a_i) q_ij = 0`, i.e. `(Q - I) a = -d`, through the fundamental
/// matrix, gauged so that `a[0] = 0`.
pub fn solve_shifts(q: &[Vec<f64>], d: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    let qm = to_matrix(q)?;
    let n = q.len();
    if d.len() != n || pi.len() != n {
        return Err(Error::InvalidModel("d and pi must have one entry per line".into()));
    }
    let mean = dot(d, pi);
    if mean.abs() > CRITICAL_TOL {
        return Err(Error::NotCritical { drift: mean });
    }
    // (I - Q + 1 pi^T) a = d - mean has the unique solution with pi.a = 0,
    // which also solves (Q - I) a = -(d - mean).
    let rhs = DVector::from_iterator(n, d.iter().map(|v| v - mean));
    let mut m = DMatrix::identity(n, n) - qm;
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += pi[j];
        }
    }
    let lu = m.clone().lu();
    let mut a = lu.solve(&rhs).ok_or_else(|| Error::Singular("fundamental matrix is singular".into()))?;
    // one round of iterative refinement
    let r = &rhs - &m * &a;
    a += lu.solve(&r).ok_or_else(|| Error::Singular("fundamental matrix is singular".into()))?;
    let a0 = a[0];
    let a: Vec<f64> = a.iter().map(|v| v - a0).collect();
    let resid = shift_residual(q, d, &a);
    let scale = 1.0 + d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if resid > 1e-10 * scale {
        return Err(Error::Singular(format!("shift system residual {resid:e} too large")));
    }
    Ok(a)
}

/// `max_i |d_i + sum_j (a_j - a_i) q_ij|`.
pub fn shift_residual(q: &[Vec<f64>], d: &[f64], a: &[f64]) -> f64 {
    (0..d.len())
        .map(|i| (d[i] + (0..a.len()).map(|j| (a[j] - a[i]) * q[i][j]).sum::<f64>()).abs())
        .fold(0.0, f64::max)
}

/// Constants of the line-shifted chain `(X_n + a_{eta_n}, eta_n)`, which has
/// Lamperti drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformed {
    pub c: Vec<f64>,
    pub s2: Vec<f64>,
}

/// `c_i = e_i + sum_j a_j gamma_ij` and
/// `s_i^2 = t_i^2 + 2 sum_j a_j d_ij + sum_j (a_j^2 - a_i^2) q_ij`.
pub fn transform_to_lamperti(profile: &DriftProfile, a: &[f64]) -> Result<Transformed> {
    let n = profile.num_lines();
    if a.len() != n {
        return Err(Error::InvalidModel("one shift per line required".into()));
    }
    let mut c = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    for i in 0..n {
        let qi = &profile.q_limit[i];
        c.push(profile.e_or_c[i] + dot(a, &profile.gamma[i]));
        let quad: f64 = (0..n).map(|j| (a[j] * a[j] - a[i] * a[i]) * qi[j]).sum();
        let v = profile.var[i] + 2.0 * dot(a, &profile.cross[i]) + quad;
        if v < -1e-10 {
            return Err(Error::IllPosed(format!("transformed s_{i}^2 = {v:e} is negative")));
        }
        s2.push(v.max(0.0));
    }
    if !s2.iter().any(|&v| v > 0.0) {
        return Err(Error::IllPosed("every transformed s_i^2 vanishes".into()));
    }
    Ok(Transformed { c, s2 })
}

/// `U = sum_i (2 e_i + 2 sum_j a_j gamma_ij) pi_i`,
/// `V = sum_i (t_i^2 + 2 sum_j a_j d_ij) pi_i`.
pub fn compute_uv(pi: &[f64], a: &[f64], profile: &DriftProfile) -> (f64, f64) {
    let mut u = 0.0;
    let mut v = 0.0;
    for (i, p) in pi.iter().enumerate() {
        u += (2.0 * profile.e_or_c[i] + 2.0 * dot(a, &profile.gamma[i])) * p;
        v += (profile.var[i] + 2.0 * dot(a, &profile.cross[i])) * p;
    }
    (u, v)
}

/// Lamperti-case statistics `U = 2 sum c_i pi_i`, `V = sum s_i^2 pi_i`.
pub fn lamperti_uv(pi: &[f64], c: &[f64], s2: &[f64]) -> (f64, f64) {
    (2.0 * dot(c, pi), dot(s2, pi))
}

/// Critical moment order `(V - U) / (2V)` for passage times: `E[tau^s]` is
/// finite for `s < theta*` (and `s <= p/2`) and infinite for `s > theta*`.
pub fn moment_threshold(u: f64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(v));
    }
    Ok((v - u) / (2.0 * v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Relative dead-band for the sign tests, scaled by `|U| + |V| + 1`.
    pub deadband: f64,
    /// Tolerance on `sum d_i pi_i` below which the drift counts as critical.
    pub critical_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            deadband: 1e-9,
            critical_tol: CRITICAL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierReport {
    pub regime: Regime,
    pub pi: Vec<f64>,
    /// `sum_i d_i pi_i`
    pub mean_drift: f64,
    /// Shifts with `a[0] = 0`; absent when the drift is not critical.
    pub a: Option<Vec<f64>>,
    pub transformed: Option<Transformed>,
    #[serde(rename = "U")]
    pub u: Option<f64>,
    #[serde(rename = "V")]
    pub v: Option<f64>,
    pub verdict: Verdict,
    /// `(V - U) / (2V)` clipped to `[0, p/2]`.
    pub theta_star: Option<f64>,
    pub theta_star_raw: Option<f64>,
    /// `p/2`, the cap on guaranteed moments (`None` when `p` is infinite).
    pub moment_cap: Option<f64>,
    /// Set for boundary verdicts, which need the strengthened rate assumptions.
    pub boundary_caveat: bool,
}

pub fn classify(profile: &DriftProfile) -> Result<ClassifierReport> {
    classify_with(profile, &ClassifyOptions::default())
}

/// Classifies a profile.
///
/// Constant drift with `sum d_i pi_i != 0` (in any regime) is decided by its
/// sign alone and carries no `theta*`. Critical profiles go through the shift
/// system and the `U`, `V` tests: `U > V` transient, `|U| < V` null
/// recurrent, `U < -V` positive recurrent, `|U| = V` boundary.
pub fn classify_with(profile: &DriftProfile, opts: &ClassifyOptions) -> Result<ClassifierReport> {
    profile.validate()?;
    let pi = stationary_distribution(&profile.q_limit)?;
    let mean_drift = dot(&profile.d, &pi);
    let cap = profile.regularity.p.is_finite().then(|| profile.regularity.p / 2.0);
    let mut report = ClassifierReport {
        regime: profile.regime,
        pi,
        mean_drift,
        a: None,
        transformed: None,
        u: None,
        v: None,
        verdict: Verdict::NullRecurrent,
        theta_star: None,
        theta_star_raw: None,
        moment_cap: cap,
        boundary_caveat: false,
    };
    if mean_drift.abs() > opts.critical_tol {
        report.verdict = if mean_drift > 0.0 {
            Verdict::Transient
        } else {
            Verdict::PositiveRecurrent
        };
        return Ok(report);
    }
    if profile.regime == Regime::Constant {
        return Err(Error::IllPosed(
            "constant drift with sum d_i pi_i = 0 needs the 1/x terms; supply a generalized Lamperti profile".into(),
        ));
    }
    let a = match profile.regime {
        Regime::Lamperti => vec![0.0; profile.num_lines()],
        _ => solve_shifts(&profile.q_limit, &profile.d, &report.pi)?,
    };
    let transformed = transform_to_lamperti(profile, &a)?;
    let (u, v) = compute_uv(&report.pi, &a, profile);
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(v));
    }
    let band = opts.deadband * (u.abs() + v.abs() + 1.0);
    report.verdict = if u - v > band {
        Verdict::Transient
    } else if u + v < -band {
        Verdict::PositiveRecurrent
    } else if v - u.abs() > band {
        Verdict::NullRecurrent
    } else {
        report.boundary_caveat = true;
        Verdict::BoundaryNullRecurrent
    };
    let raw = moment_threshold(u, v)?;
    let clipped = match cap {
        Some(c) => raw.clamp(0.0, c),
        None => raw.max(0.0),
    };
    report.theta_star_raw = Some(raw);
    report.theta_star = Some(clipped);
    report.a = Some(a);
    report.transformed = Some(transformed);
    report.u = Some(u);
    report.v = Some(v);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CorrelatedRw;

    fn crw(q: f64, c: f64) -> DriftProfile {
        CorrelatedRw::symmetric(q, c).unwrap().drift_profile()
    }

    #[test]
    fn two_state_symmetric_pi() {
        for q in [0.1, 0.5, 0.9] {
            let pi = stationary_distribution(&[vec![q, 1.0 - q], vec![1.0 - q, q]]).unwrap();
            assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
        }
        let pi = stationary_distribution(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(pi, vec![0.5, 0.5]);
    }

    #[test]
    fn reducible_names_class() {
        let q = vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.2, 0.2, 0.6]];
        match stationary_distribution(&q) {
            Err(Error::Reducible { from, unreachable }) => {
                assert_eq!(from, 0);
                assert_eq!(unreachable, vec![2]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crw_shifts() {
        let q = 0.7;
        let p = crw(q, 0.0);
        let a = solve_shifts(&p.q_limit, &p.d, &[0.5, 0.5]).unwrap();
        assert_eq!(a[0], 0.0);
        assert!((a[1] - (2.0 * q - 1.0) / (1.0 - q)).abs() < 1e-12);
        let zero = solve_shifts(&p.q_limit, &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn not_critical_is_refused() {
        let p = crw(0.7, 0.0);
        assert!(matches!(
            solve_shifts(&p.q_limit, &[0.1, 0.1], &[0.5, 0.5]),
            Err(Error::NotCritical { .. })
        ));
    }

    #[test]
    fn crw_uv() {
        let (q, c) = (0.7, 0.4);
        let r = classify(&crw(q, c)).unwrap();
        assert!((r.u.unwrap() - c / (1.0 - q)).abs() < 1e-12);
        assert!((r.v.unwrap() - q / (1.0 - q)).abs() < 1e-12);
        assert!((r.theta_star_raw.unwrap() - (0.5 - c / (2.0 * q))).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::NullRecurrent);
    }

    #[test]
    fn lamperti_passes_through() {
        let p = DriftProfile::lamperti(vec![vec![0.5, 0.5], vec![0.3, 0.7]], vec![0.2, -0.1], vec![1.0, 2.0]).unwrap();
        let t = transform_to_lamperti(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(t.c, p.e_or_c);
        assert_eq!(t.s2, p.var);
    }

    #[test]
    fn chapter_five_thresholds() {
        let q = 1.0 / 3.0;
        assert_eq!(classify(&crw(q, 0.5)).unwrap().verdict, Verdict::Transient);
        assert_eq!(classify(&crw(q, -0.5)).unwrap().verdict, Verdict::PositiveRecurrent);
        assert!(classify(&crw(q, 0.2)).unwrap().verdict.is_null());
        let c = 0.1;
        let r = classify(&crw(q, c)).unwrap();
        assert!((r.theta_star_raw.unwrap() - (0.5 - 1.5 * c)).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_flagged() {
        let r = classify(&crw(0.5, 0.5)).unwrap();
        assert_eq!(r.verdict, Verdict::BoundaryNullRecurrent);
        assert!(r.boundary_caveat);
    }

    #[test]
    fn constant_regime() {
        let q = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let up = DriftProfile::constant(q.clone(), vec![0.3, -0.1], vec![1.0, 1.0]).unwrap();
        let r = classify(&up).unwrap();
        assert_eq!(r.verdict, Verdict::Transient);
        assert!(r.theta_star.is_none());
        let down = DriftProfile::constant(q.clone(), vec![-0.3, 0.1], vec![1.0, 1.0]).unwrap();
        assert_eq!(classify(&down).unwrap().verdict, Verdict::PositiveRecurrent);
        let flat = DriftProfile::constant(q, vec![0.3, -0.3], vec![1.0, 1.0]).unwrap();
        assert!(matches!(classify(&flat), Err(Error::IllPosed(_))));
    }

    #[test]
    fn threshold_basics() {
        assert_eq!(moment_threshold(0.0, 2.0).unwrap(), 0.5);
        assert!(moment_threshold(1.0, 0.0).is_err());
        assert!(moment_threshold(0.1, 1.0).unwrap() > moment_threshold(0.2, 1.0).unwrap());
    }

    #[test]
    fn clipped_transient_threshold() {
        let r = classify(&crw(0.7, 1.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Transient);
        assert!(r.theta_star_raw.unwrap() < 0.0);
        assert_eq!(r.theta_star, Some(0.0));
    }
}
