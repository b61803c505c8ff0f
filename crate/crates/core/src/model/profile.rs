use serde::{Deserialize, Serialize};

use super::{empirical_moments, HalfStripModel, RegularityParams, ROW_SUM_TOL};
use crate::classifier::{check_irreducible, stationary_distribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `mu_i(x) = d_i + o(1)`
    Constant,
    /// `mu_i(x) = c_i / x + o(1/x)`, `sigma_i^2(x) -> s_i^2`
    Lamperti,
    /// `mu_i(x) = d_i + e_i / x + o(1/x)`, `q_ij(x) = q_ij + gamma_ij / x + o(1/x)`
    GeneralizedLamperti,
}

/// Asymptotic constants of a half-strip chain in one of the drift regimes.
///
/// Entries that a regime does not use are stored as zeros: `gamma` and
/// `cross` outside the generalized Lamperti regime, `d` under Lamperti, and
/// `e_or_c` under constant drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftProfile {
    pub regime: Regime,
    pub q_limit: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    /// `e_i` (generalized Lamperti) or `c_i` (Lamperti).
    pub e_or_c: Vec<f64>,
    /// `t_i^2` (generalized Lamperti), `s_i^2` (Lamperti), or the limiting
    /// second moments under constant drift.
    pub var: Vec<f64>,
    pub cross: Vec<Vec<f64>>,
    #[serde(default)]
    pub regularity: RegularityParams,
}

fn zeros(n: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; n]; n]
}

impl DriftProfile {
    pub fn constant(q: Vec<Vec<f64>>, d: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let n = q.len();
        let p = Self {
            regime: Regime::Constant,
            gamma: zeros(n),
            cross: zeros(n),
            e_or_c: vec![0.0; n],
            q_limit: q,
            d,
            var,
            regularity: RegularityParams::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn lamperti(q: Vec<Vec<f64>>, c: Vec<f64>, s2: Vec<f64>) -> Result<Self> {
        let n = q.len();
        let p = Self {
            regime: Regime::Lamperti,
            gamma: zeros(n),
            cross: zeros(n),
            d: vec![0.0; n],
            q_limit: q,
            e_or_c: c,
            var: s2,
            regularity: RegularityParams::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn generalized(
        q: Vec<Vec<f64>>,
        gamma: Vec<Vec<f64>>,
        d: Vec<f64>,
        e: Vec<f64>,
        t2: Vec<f64>,
        cross: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let p = Self {
            regime: Regime::GeneralizedLamperti,
            q_limit: q,
            gamma,
            d,
            e_or_c: e,
            var: t2,
            cross,
            regularity: RegularityParams::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_regularity(mut self, regularity: RegularityParams) -> Result<Self> {
        regularity.validate()?;
        self.regularity = regularity;
        Ok(self)
    }

    pub fn num_lines(&self) -> usize {
        self.q_limit.len()
    }

    /// Checks shapes, stochasticity and irreducibility of `q_limit`, the
    /// zero row sums of `gamma`, `d_i = sum_j d_ij`, and a nonzero variance.
    pub fn validate(&self) -> Result<()> {
        let n = self.q_limit.len();
        if n == 0 {
            return Err(Error::InvalidModel("profile has no lines".into()));
        }
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !square(&self.q_limit) || !square(&self.gamma) || !square(&self.cross) {
            return Err(Error::InvalidModel(format!("profile matrices must be {n}x{n}")));
        }
        if self.d.len() != n || self.e_or_c.len() != n || self.var.len() != n {
            return Err(Error::InvalidModel(format!("profile vectors must have length {n}")));
        }
        let all = self
            .q_limit
            .iter()
            .chain(&self.gamma)
            .chain(&self.cross)
            .flatten()
            .chain(&self.d)
            .chain(&self.e_or_c)
            .chain(&self.var);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("profile entries must be finite".into()));
        }
        for (i, row) in self.q_limit.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&v| v < 0.0) || (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("q_limit row {i} is not stochastic (sum {s})")));
            }
        }
        check_irreducible(&self.q_limit)?;
        for (i, row) in self.gamma.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s.abs() > 1e-10 {
                return Err(Error::InvalidModel(format!("gamma row {i} sums to {s}, not 0")));
            }
        }
        if self.regime == Regime::GeneralizedLamperti {
            for i in 0..n {
                let s: f64 = self.cross[i].iter().sum();
                if (s - self.d[i]).abs() > 1e-10 {
                    return Err(Error::InvalidModel(format!(
                        "d_{i} = {} but sum_j d_{i}j = {s}",
                        self.d[i]
                    )));
                }
            }
        }
        if self.var.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidModel("variance entries must be nonnegative".into()));
        }
        if !self.var.iter().any(|&v| v > 0.0) {
            return Err(Error::InvalidModel("at least one variance entry must be positive".into()));
        }
        Ok(())
    }

    /// Applies a line permutation: new line `k` is old line `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_lines();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidModel("not a permutation of the lines".into()));
        }
        let mat = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| m[perm[i]][perm[j]]).collect()).collect()
        };
        let vec = |v: &Vec<f64>| -> Vec<f64> { perm.iter().map(|&p| v[p]).collect() };
        Ok(Self {
            regime: self.regime,
            q_limit: mat(&self.q_limit),
            gamma: mat(&self.gamma),
            cross: mat(&self.cross),
            d: vec(&self.d),
            e_or_c: vec(&self.e_or_c),
            var: vec(&self.var),
            regularity: self.regularity.clone(),
        })
    }
}

/// Tolerances for [`fit_drift_profile_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Largest accepted regression residual, relative to `1 + |intercept|`.
    pub residual_tol: f64,
    /// Threshold below which a fitted drift (or `sum d_i pi_i`) counts as zero.
    pub zero_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-6,
            zero_tol: 1e-8,
        }
    }
}

/// Largest absolute regression residual per fitted quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResiduals {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub cross: Vec<Vec<f64>>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedProfile {
    pub profile: DriftProfile,
    pub residuals: FitResiduals,
    /// `sum_i d_i pi_i` of the fitted intercepts.
    pub mean_drift: f64,
}

// Least squares f(x) = a + b/x; returns (a, b, max |residual|).
fn fit_line(us: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = us.len() as f64;
    let mu = us.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (u, y) in us.iter().zip(ys) {
        sxx += (u - mu) * (u - mu);
        sxy += (u - mu) * (y - my);
    }
    let slope = sxy / sxx;
    let icept = my - slope * mu;
    let res = us
        .iter()
        .zip(ys)
        .map(|(u, y)| (y - icept - slope * u).abs())
        .fold(0.0, f64::max);
    (icept, slope, res)
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-13 {
        0.0
    } else {
        v
    }
}

/// Fits the asymptotic constants with default tolerances.
pub fn fit_drift_profile(model: &HalfStripModel, regime: Option<Regime>, probe_xs: &[f64]) -> Result<FittedProfile> {
    fit_drift_profile_with(model, regime, probe_xs, &FitOptions::default())
}

/// Regresses the exact moments at `probe_xs` on `{1, 1/x}` and reads off the
/// constants of `regime` (chosen automatically when `None`: Lamperti if every
/// fitted `d_i` vanishes, generalized Lamperti if only `sum d_i pi_i` does,
/// constant drift otherwise).
///
/// A residual above tolerance, or a requested regime the fitted drifts
/// contradict, is reported as [`Error::RegimeMismatch`].
pub fn fit_drift_profile_with(
    model: &HalfStripModel,
    regime: Option<Regime>,
    probe_xs: &[f64],
    opts: &FitOptions,
) -> Result<FittedProfile> {
    if probe_xs.len() < 3 {
        return Err(Error::InsufficientData {
            got: probe_xs.len(),
            need: 3,
        });
    }
    if probe_xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("probe_xs must be strictly ascending".into()));
    }
    if probe_xs[0] < 100.0 {
        return Err(Error::Config(format!("probe_xs must start at 100 or above, got {}", probe_xs[0])));
    }
    let n = model.num_lines();
    let us: Vec<f64> = probe_xs.iter().map(|x| 1.0 / x).collect();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let row = probe_xs
            .iter()
            .map(|&x| empirical_moments(model, x, i))
            .collect::<Result<Vec<_>>>()?;
        samples.push(row);
    }

    let mut res = FitResiduals {
        mu: vec![0.0; n],
        sigma2: vec![0.0; n],
        q: zeros(n),
        cross: zeros(n),
        max: 0.0,
    };
    let mut worst: (f64, String) = (0.0, String::new());
    let mut track = |value: f64, icept: f64, what: String| {
        let rel = value / (1.0 + icept.abs());
        if rel > worst.0 {
            worst = (rel, what);
        }
    };

    let (mut d, mut e, mut var) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut q, mut gamma, mut cross) = (zeros(n), zeros(n), zeros(n));
    for i in 0..n {
        let col = |f: &dyn Fn(&super::Moments) -> f64| samples[i].iter().map(f).collect::<Vec<_>>();
        let (a, b, r) = fit_line(&us, &col(&|m| m.mu));
        d[i] = snap(a);
        e[i] = snap(b);
        res.mu[i] = r;
        track(r, a, format!("mu_{i}"));
        let (a, _, r) = fit_line(&us, &col(&|m| m.sigma2));
        var[i] = snap(a);
        res.sigma2[i] = r;
        track(r, a, format!("sigma2_{i}"));
        for j in 0..n {
            let (a, b, r) = fit_line(&us, &col(&|m| m.q_row[j]));
            q[i][j] = snap(a);
            gamma[i][j] = snap(b);
            res.q[i][j] = r;
            track(r, a, format!("q_{i}{j}"));
            let (a, _, r) = fit_line(&us, &col(&|m| m.mu_row[j]));
            cross[i][j] = snap(a);
            res.cross[i][j] = r;
            track(r, a, format!("mu_{i}{j}"));
        }
    }
    res.max = res
        .mu
        .iter()
        .chain(&res.sigma2)
        .chain(res.q.iter().flatten())
        .chain(res.cross.iter().flatten())
        .cloned()
        .fold(0.0, f64::max);
    if worst.0 > opts.residual_tol {
        return Err(Error::RegimeMismatch(format!(
            "moments are not of the form a + b/x on the probe points: residual {:.3e} in {}",
            worst.0, worst.1
        )));
    }

    // Fitted rows can miss 1 by rounding; renormalise before validation.
    for row in q.iter_mut() {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    for row in gamma.iter_mut() {
        let s = row.iter().sum::<f64>() / n as f64;
        row.iter_mut().for_each(|v| *v -= s);
    }
    for i in 0..n {
        let s: f64 = cross[i].iter().sum();
        if (s - d[i]).abs() <= 1e-10 {
            d[i] = s;
        }
    }

    let pi = stationary_distribution(&q)?;
    let mean_drift: f64 = d.iter().zip(&pi).map(|(a, b)| a * b).sum();
    let all_zero = d.iter().all(|v| v.abs() <= opts.zero_tol);
    let regime = regime.unwrap_or(if all_zero {
        Regime::Lamperti
    } else if mean_drift.abs() <= opts.zero_tol {
        Regime::GeneralizedLamperti
    } else {
        Regime::Constant
    });

    let mut profile = match regime {
        Regime::Lamperti => {
            if !all_zero {
                return Err(Error::RegimeMismatch(format!(
                    "Lamperti regime needs vanishing constant drifts, fitted d = {d:?}"
                )));
            }
            DriftProfile::lamperti(q, e, var)?
        }
        Regime::GeneralizedLamperti => {
            if mean_drift.abs() > opts.zero_tol {
                return Err(Error::RegimeMismatch(format!(
                    "generalized Lamperti regime needs sum d_i pi_i = 0, fitted {mean_drift:e}"
                )));
            }
            // Project the tolerated residual drift out so the shift system
            // is exactly solvable.
            for i in 0..n {
                d[i] -= mean_drift;
                cross[i][i] -= mean_drift;
            }
            DriftProfile::generalized(q, gamma, d, e, var, cross)?
        }
        Regime::Constant => DriftProfile::constant(q, d, var)?,
    };
    profile.regularity = model.regularity.clone();
    Ok(FittedProfile {
        profile,
        residuals: res,
        mean_drift,
    })
}
