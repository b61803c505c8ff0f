use serde::{Deserialize, Serialize};

use super::{empirical_moments, DriftProfile, HalfStripModel, Regime};
use crate::classifier::{solve_shifts, stationary_distribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LyapunovKind {
    /// `f_nu(x,i) = x^nu + (nu/2) b_i x^(nu-2)`, for Lamperti drift.
    #[serde(rename = "f_nu")]
    F,
    /// `g(x,i) = x + b_i`, for constant drift.
    #[serde(rename = "g")]
    G,
    /// `h_nu(x,i) = x^(-nu) - nu b_i x^(-nu-1)`, for constant drift.
    #[serde(rename = "h_nu")]
    H,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub nu: f64,
    pub b: Vec<f64>,
    pub x0: f64,
}

fn max_abs(b: &[f64]) -> f64 {
    b.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl LyapunovSpec {
    /// Settings for `f_nu`, with `x0 = 1 + sqrt(|nu| max|b_i|)`.
    pub fn lamperti(nu: f64, b: Vec<f64>) -> Self {
        let x0 = 1.0 + (nu.abs() * max_abs(&b)).sqrt();
        Self { nu, b, x0 }
    }

    /// Settings for `h_nu`, with `x0 = 1 + 2 nu max|b_i|`.
    pub fn constant(nu: f64, b: Vec<f64>) -> Self {
        let x0 = 1.0 + 2.0 * nu * max_abs(&b);
        Self { nu, b, x0 }
    }

    /// Settings for `g`, which is never clamped.
    pub fn linear(b: Vec<f64>) -> Self {
        Self { nu: 1.0, b, x0: 0.0 }
    }
}

/// Evaluates the Lyapunov function at `(x, i)`. `f_nu` and `h_nu` are held
/// at their value at `x0` for `x < x0`.
pub fn lyapunov_value(spec: &LyapunovSpec, kind: LyapunovKind, x: f64, i: usize) -> f64 {
    let nu = spec.nu;
    let b = spec.b[i];
    match kind {
        LyapunovKind::G => x + b,
        LyapunovKind::H => {
            let x = x.max(spec.x0);
            x.powf(-nu) - nu * b * x.powf(-nu - 1.0)
        }
        LyapunovKind::F => {
            let x = x.max(spec.x0);
            x.powf(nu) + 0.5 * nu * b * x.powf(nu - 2.0)
        }
    }
}

/// Local constants entering the leading increment term at one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalConstants {
    /// Constant drift `d_i`.
    pub d: f64,
    /// Lamperti drift coefficient `c_i`.
    pub c: f64,
    /// Limiting second moment `s_i^2`.
    pub s2: f64,
    pub q_row: Vec<f64>,
}

impl LocalConstants {
    pub fn from_profile(profile: &DriftProfile, i: usize) -> Self {
        let c = match profile.regime {
            Regime::Constant => 0.0,
            _ => profile.e_or_c[i],
        };
        Self {
            d: profile.d[i],
            c,
            s2: profile.var[i],
            q_row: profile.q_limit[i].clone(),
        }
    }
}

/// Leading term of `E[F(X',eta') - F(x,i)]`:
///
/// * `g`: `d_i + sum_j (b_j - b_i) q_ij`
/// * `h_nu`: `-nu x^(-1-nu) (d_i + sum_j (b_j - b_i) q_ij)`
/// * `f_nu`: `(nu/2) x^(nu-2) (2 c_i + (nu-1) s_i^2 + sum_j (b_j - b_i) q_ij)`
pub fn predicted_increment(spec: &LyapunovSpec, kind: LyapunovKind, x: f64, i: usize, k: &LocalConstants) -> f64 {
    let nu = spec.nu;
    let shift: f64 = k.q_row.iter().zip(&spec.b).map(|(q, bj)| (bj - spec.b[i]) * q).sum();
    match kind {
        LyapunovKind::G => k.d + shift,
        LyapunovKind::H => -nu * x.powf(-1.0 - nu) * (k.d + shift),
        LyapunovKind::F => 0.5 * nu * x.powf(nu - 2.0) * (2.0 * k.c + (nu - 1.0) * k.s2 + shift),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCheck {
    pub empirical_increment: f64,
    pub predicted_leading_term: f64,
}

/// Exact expected increment of the Lyapunov function over the kernel's
/// support at `(x, i)`, next to the leading term predicted from the constants.
///
/// With a profile, its limiting constants are used (`f_nu` requires a
/// Lamperti profile). Without one, the constants are read off the kernel at
/// `x`: `c_i = x mu_i(x)`, `d_i = mu_i(x)`, `s_i^2 = sigma_i^2(x)`, `q_ij(x)`.
pub fn lyapunov_drift_check(
    model: &HalfStripModel,
    spec: &LyapunovSpec,
    kind: LyapunovKind,
    x: f64,
    i: usize,
    profile: Option<&DriftProfile>,
) -> Result<DriftCheck> {
    let n = model.num_lines();
    if spec.b.len() != n {
        return Err(Error::InvalidModel(format!("b has {} entries for {n} lines", spec.b.len())));
    }
    let jumps = model.transitions(x, i)?;
    if jumps.iter().any(|j| !j.y.is_finite()) {
        return Err(Error::Unsupported("kernel support is not finite".into()));
    }
    let here = lyapunov_value(spec, kind, x, i);
    let empirical_increment = jumps
        .iter()
        .map(|j| j.prob * (lyapunov_value(spec, kind, j.y, j.line) - here))
        .sum();
    let k = match profile {
        Some(p) => {
            if kind == LyapunovKind::F && p.regime != Regime::Lamperti {
                return Err(Error::RegimeMismatch(
                    "f_nu increments are predicted from a Lamperti profile; transform first".into(),
                ));
            }
            if p.num_lines() != n {
                return Err(Error::InvalidModel("profile and model line counts differ".into()));
            }
            LocalConstants::from_profile(p, i)
        }
        None => {
            let m = empirical_moments(model, x, i)?;
            LocalConstants {
                d: m.mu,
                c: x * m.mu,
                s2: m.sigma2,
                q_row: m.q_row,
            }
        }
    };
    Ok(DriftCheck {
        empirical_increment,
        predicted_leading_term: predicted_increment(spec, kind, x, i, &k),
    })
}

/// Builds `b` with `u_i + sum_j (b_j - b_i) q_ij < 0` on every line, given
/// `sum_i u_i pi_i < 0`: spreads the slack `eps_i = eps / (|S| pi_i)` with
/// `eps = -sum u_i pi_i` and solves the shift system for `u + eps`.
pub fn negative_drift_shifts(q: &[Vec<f64>], u: &[f64]) -> Result<Vec<f64>> {
    let pi = stationary_distribution(q)?;
    let n = pi.len();
    if u.len() != n {
        return Err(Error::InvalidModel("u must have one entry per line".into()));
    }
    let mean: f64 = u.iter().zip(&pi).map(|(a, b)| a * b).sum();
    if !(mean < 0.0) {
        return Err(Error::IllPosed(format!("need sum u_i pi_i < 0, got {mean:e}")));
    }
    let eps = -mean;
    let d: Vec<f64> = (0..n).map(|i| u[i] + eps / (n as f64 * pi[i])).collect();
    solve_shifts(q, &d, &pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CorrelatedRw, SyntheticKernel};

    #[test]
    fn f_reduces_to_power_without_b() {
        let s = LyapunovSpec::lamperti(2.0, vec![0.0, 0.0]);
        assert_eq!(lyapunov_value(&s, LyapunovKind::F, 3.0, 0), 9.0);
    }

    #[test]
    fn f_is_clamped_below_x0() {
        let s = LyapunovSpec::lamperti(2.0, vec![1.0, 1.0]);
        assert!((s.x0 - (1.0 + 2f64.sqrt())).abs() < 1e-15);
        // x = 2 lies below x0, so the value is f(x0) = x0^2 + 1
        let v = lyapunov_value(&s, LyapunovKind::F, 2.0, 0);
        assert!((v - (s.x0 * s.x0 + 1.0)).abs() < 1e-12);
        assert!((lyapunov_value(&s, LyapunovKind::F, 3.0, 1) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn h_is_clamped_below_x0() {
        let s = LyapunovSpec::constant(1.0, vec![0.5, -0.5]);
        assert_eq!(s.x0, 2.0);
        for i in 0..2 {
            let at = lyapunov_value(&s, LyapunovKind::H, s.x0, i);
            assert_eq!(lyapunov_value(&s, LyapunovKind::H, 0.3, i), at);
            assert_eq!(lyapunov_value(&s, LyapunovKind::H, 1.9, i), at);
        }
        assert_eq!(lyapunov_value(&s, LyapunovKind::H, 2.0, 0), 0.5 - 0.5 / 4.0);
    }

    #[test]
    fn vanishing_coefficient() {
        let nu = 0.5;
        let s2 = vec![1.0, 3.0];
        let c: Vec<f64> = s2.iter().map(|s| s * (1.0 - nu) / 2.0).collect();
        let prof = DriftProfile::lamperti(vec![vec![0.3, 0.7], vec![0.6, 0.4]], c, s2).unwrap();
        let m = HalfStripModel::new(SyntheticKernel::from_profile(&prof).unwrap());
        let spec = LyapunovSpec::lamperti(nu, vec![0.0, 0.0]);
        for i in 0..2 {
            let r = lyapunov_drift_check(&m, &spec, LyapunovKind::F, 1e4, i, Some(&prof)).unwrap();
            assert_eq!(r.predicted_leading_term, 0.0);
        }
    }

    #[test]
    fn negative_case_shifts() {
        let q = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.4]];
        let u = vec![0.5, -1.0, 0.2];
        let b = negative_drift_shifts(&q, &u).unwrap();
        let spec = LyapunovSpec::linear(b);
        for i in 0..3 {
            let k = LocalConstants {
                d: u[i],
                c: 0.0,
                s2: 0.0,
                q_row: q[i].clone(),
            };
            assert!(predicted_increment(&spec, LyapunovKind::G, 10.0, i, &k) < 0.0);
        }
        assert!(negative_drift_shifts(&q, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn g_increment_is_exact_for_crw() {
        let m = HalfStripModel::new(CorrelatedRw::symmetric(0.7, 0.4).unwrap());
        let spec = LyapunovSpec::linear(vec![0.0, 1.5]);
        for i in 0..2 {
            let r = lyapunov_drift_check(&m, &spec, LyapunovKind::G, 500.0, i, None).unwrap();
            assert!((r.empirical_increment - r.predicted_leading_term).abs() < 1e-12);
        }
    }
}
