use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DriftProfile, Jump, Kernel, ROW_SUM_TOL};
use crate::error::{Error, Result};

/// Correlated (persistent) random walk on `Z_+` with a memory of one or two
/// steps.
///
/// The line records the direction(s) of the most recent step(s). From `x >= 1`
/// the walk continues in its last direction `v` with probability
/// `q + v * c_v / (2x)` (clipped to `[0, 1]`), where `c_v` is `c_plus` or
/// `c_minus`. From `x < 1` it steps to `x + 1` moving right.
///
/// Line order for one-step memory is `(-1, +1)`; for two-step memory it is
/// `(--, -+, +-, ++)` as `(previous, last)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatedRw {
    pub q: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    memory: u8,
}

impl CorrelatedRw {
    pub fn new(q: f64, c_plus: f64, c_minus: f64, memory: u8) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidModel(format!("q must lie in (0,1), got {q}")));
        }
        if !c_plus.is_finite() || !c_minus.is_finite() {
            return Err(Error::InvalidModel("c_plus and c_minus must be finite".into()));
        }
        if memory != 1 && memory != 2 {
            return Err(Error::InvalidModel(format!("memory must be 1 or 2, got {memory}")));
        }
        Ok(Self {
            q,
            c_plus,
            c_minus,
            memory,
        })
    }

    /// One-step walk with `c_{+1} = c_{-1} = c`.
    pub fn symmetric(q: f64, c: f64) -> Result<Self> {
        Self::new(q, c, c, 1)
    }

    pub fn memory(&self) -> u8 {
        self.memory
    }

    /// Average perturbation `(c_{+1} + c_{-1}) / 2`.
    pub fn mean_c(&self) -> f64 {
        0.5 * (self.c_plus + self.c_minus)
    }

    #[inline]
    fn last_dir(&self, line: usize) -> f64 {
        if line & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn next_line(&self, line: usize, up: bool) -> usize {
        let w = up as usize;
        match self.memory {
            1 => w,
            _ => 2 * (line & 1) + w,
        }
    }

    #[inline]
    fn c_for(&self, dir: f64) -> f64 {
        if dir > 0.0 {
            self.c_plus
        } else {
            self.c_minus
        }
    }

    /// The asymptotic constants of this walk with zero error terms:
    /// `d_i = v(2q-1)`, `e_i = c_v`, `gamma_ij = w c_v / 2`, `d_ij = w q_ij`,
    /// `t_i^2 = 1`, where `v` is the last direction on line `i` and `w` the
    /// direction of the step into line `j`.
    pub fn drift_profile(&self) -> DriftProfile {
        let n = self.num_lines();
        let mut q = vec![vec![0.0; n]; n];
        let mut gamma = vec![vec![0.0; n]; n];
        let mut cross = vec![vec![0.0; n]; n];
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        for i in 0..n {
            let v = self.last_dir(i);
            let cv = self.c_for(v);
            for up in [false, true] {
                let w = if up { 1.0 } else { -1.0 };
                let j = self.next_line(i, up);
                let p = if w == v { self.q } else { 1.0 - self.q };
                q[i][j] = p;
                gamma[i][j] = w * cv / 2.0;
                cross[i][j] = w * p;
            }
            d[i] = v * (2.0 * self.q - 1.0);
            e[i] = cv;
        }
        DriftProfile::generalized(q, gamma, d, e, vec![1.0; n], cross)
            .expect("correlated walk constants satisfy the profile invariants")
    }
}

impl Kernel for CorrelatedRw {
    fn num_lines(&self) -> usize {
        if self.memory == 1 {
            2
        } else {
            4
        }
    }

    fn line_labels(&self) -> Vec<String> {
        match self.memory {
            1 => vec!["-1".into(), "+1".into()],
            _ => vec!["--".into(), "-+".into(), "+-".into(), "++".into()],
        }
    }

    #[inline]
    fn jumps_into(&self, x: f64, line: usize, out: &mut Vec<Jump>) -> Result<()> {
        out.clear();
        if x < 1.0 {
            out.push(Jump {
                y: x + 1.0,
                line: self.next_line(line, true),
                prob: 1.0,
            });
            return Ok(());
        }
        let v = self.last_dir(line);
        let p = (self.q + v * self.c_for(v) / (2.0 * x)).clamp(0.0, 1.0);
        let up = v > 0.0;
        out.push(Jump {
            y: x + v,
            line: self.next_line(line, up),
            prob: p,
        });
        out.push(Jump {
            y: x - v,
            line: self.next_line(line, !up),
            prob: 1.0 - p,
        });
        Ok(())
    }
}

/// A jump written in a tabular model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularJump {
    /// Absolute target (explicit states) or displacement (default rules).
    #[serde(alias = "dx")]
    pub y: f64,
    pub line: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularState {
    pub x: f64,
    pub line: String,
    pub jumps: Vec<TabularJump>,
}

/// A kernel given by explicit per-state support lists, with optional
/// translation-invariant default rules per line for states not listed.
#[derive(Debug, Clone)]
pub struct Tabular {
    lines: Vec<String>,
    explicit: HashMap<(u64, usize), Vec<Jump>>,
    // (dx, target line, p) per source line
    defaults: Vec<Option<Vec<(f64, usize, f64)>>>,
}

impl Tabular {
    pub fn new(
        lines: Vec<String>,
        states: &[TabularState],
        defaults: &[(String, Vec<TabularJump>)],
    ) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::InvalidModel("tabular model needs at least one line".into()));
        }
        let index = |label: &str| -> Result<usize> {
            lines
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::InvalidModel(format!("unknown line label `{label}`")))
        };
        let mut explicit = HashMap::new();
        for st in states {
            if !(st.x >= 0.0) {
                return Err(Error::InvalidModel(format!("state x={} is negative", st.x)));
            }
            let i = index(&st.line)?;
            let mut jumps = Vec::with_capacity(st.jumps.len());
            for j in &st.jumps {
                jumps.push(Jump {
                    y: j.y,
                    line: index(&j.line)?,
                    prob: j.p,
                });
            }
            check_row(&jumps, st.x, i)?;
            if explicit.insert((st.x.to_bits(), i), jumps).is_some() {
                return Err(Error::InvalidModel(format!(
                    "state (x={}, line={}) listed twice",
                    st.x, st.line
                )));
            }
        }
        let mut rules = vec![None; lines.len()];
        for (label, jumps) in defaults {
            let i = index(label)?;
            let mut rule = Vec::with_capacity(jumps.len());
            for j in jumps {
                rule.push((j.y, index(&j.line)?, j.p));
            }
            let total: f64 = rule.iter().map(|r| r.2).sum();
            if rule.iter().any(|r| !(r.2 >= 0.0)) || (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "default rule for line `{label}` is not a probability vector (sum {total})"
                )));
            }
            rules[i] = Some(rule);
        }
        Ok(Self {
            lines,
            explicit,
            defaults: rules,
        })
    }
}

fn check_row(jumps: &[Jump], x: f64, line: usize) -> Result<()> {
    let total: f64 = jumps.iter().map(|j| j.prob).sum();
    if jumps.iter().any(|j| !(j.prob >= 0.0) || !(j.y >= 0.0)) || (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidModel(format!(
            "support at (x={x}, line={line}) is not a probability distribution on the half strip (sum {total})"
        )));
    }
    Ok(())
}

impl Kernel for Tabular {
    fn num_lines(&self) -> usize {
        self.lines.len()
    }

    fn line_labels(&self) -> Vec<String> {
        self.lines.clone()
    }

    fn jumps_into(&self, x: f64, line: usize, out: &mut Vec<Jump>) -> Result<()> {
        out.clear();
        if let Some(js) = self.explicit.get(&(x.to_bits(), line)) {
            out.extend_from_slice(js);
            return Ok(());
        }
        match &self.defaults[line] {
            Some(rule) => {
                for &(dx, j, p) in rule {
                    let y = x + dx;
                    if y < 0.0 {
                        return Err(Error::Domain {
                            x,
                            line,
                            reason: format!("default rule jumps to y={y} < 0; list this state explicitly"),
                        });
                    }
                    out.push(Jump { y, line: j, prob: p });
                }
                Ok(())
            }
            None => Err(Error::Domain {
                x,
                line,
                reason: "state not listed and no default rule for this line".into(),
            }),
        }
    }
}

/// Higher-order error terms added to a synthetic kernel: coefficients of
/// `x^{-exponent}` in the drift `mu_i(x)` and in `q_ij(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub exponent: f64,
    pub drift: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

/// A kernel constructed to have prescribed asymptotic constants:
/// `q_ij(x) = q_ij + gamma_ij/x`, `mu_i(x) = d_i + e_i/x`,
/// `sigma_i^2(x) = t_i^2`, `mu_ij(x) -> d_ij`, plus optional higher-order
/// perturbation terms.
///
/// For each target line the displacement is two-point, `m_j +/- s`, where
/// `m_j = mu_ij(x) / q_ij(x)` and `s` is chosen so the second moment is
/// exactly `t_i^2`. The `1/x` part of the drift is carried by the most likely
/// target line. Below `x_floor` the kernel steps deterministically to `x + 1`.
#[derive(Debug, Clone)]
pub struct SyntheticKernel {
    q: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    cross: Vec<Vec<f64>>,
    e: Vec<f64>,
    t2: Vec<f64>,
    anchor: Vec<usize>,
    perturbation: Option<Perturbation>,
    x_floor: f64,
}

impl SyntheticKernel {
    /// Builds the kernel realising `profile` exactly (zero error terms).
    pub fn from_profile(profile: &DriftProfile) -> Result<Self> {
        Self::with_perturbation(profile, None)
    }

    pub fn with_perturbation(profile: &DriftProfile, perturbation: Option<Perturbation>) -> Result<Self> {
        let n = profile.num_lines();
        let q = profile.q_limit.clone();
        let gamma = profile.gamma.clone();
        let cross = profile.cross.clone();
        for i in 0..n {
            for j in 0..n {
                if q[i][j] == 0.0 && cross[i][j] != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "d_{i}{j} = {} but q_{i}{j} = 0",
                        cross[i][j]
                    )));
                }
            }
        }
        if let Some(p) = &perturbation {
            if p.drift.len() != n || p.q.len() != n || p.q.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidModel("perturbation dimensions do not match the profile".into()));
            }
            if !(p.exponent > 1.0) {
                return Err(Error::InvalidModel("perturbation exponent must exceed 1".into()));
            }
            for (i, row) in p.q.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if s.abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!("perturbation row {i} of q sums to {s}, not 0")));
                }
            }
        }
        let anchor = q
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::MIN), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc })
                    .0
            })
            .collect();
        let spread = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| q[i][j] > 0.0)
            .map(|(i, j)| (cross[i][j] / q[i][j]).abs())
            .fold(0.0, f64::max);
        let tmax = profile.var.iter().cloned().fold(0.0, f64::max).sqrt();
        let kernel = Self {
            q,
            gamma,
            cross,
            e: profile.e_or_c.clone(),
            t2: profile.var.clone(),
            anchor,
            perturbation,
            x_floor: 10.0 * (1.0 + spread + tmax),
        };
        // the two-point construction needs a nonnegative residual variance
        for i in 0..n {
            let mut buf = Vec::new();
            kernel.jumps_into(1e12, i, &mut buf)?;
        }
        Ok(kernel)
    }

    pub fn x_floor(&self) -> f64 {
        self.x_floor
    }
}

impl Kernel for SyntheticKernel {
    fn num_lines(&self) -> usize {
        self.q.len()
    }

    fn jumps_into(&self, x: f64, line: usize, out: &mut Vec<Jump>) -> Result<()> {
        out.clear();
        if x < self.x_floor {
            out.push(Jump {
                y: x + 1.0,
                line,
                prob: 1.0,
            });
            return Ok(());
        }
        let i = line;
        let n = self.q.len();
        let (pert_scale, pert) = match &self.perturbation {
            Some(p) => (x.powf(-p.exponent), Some(p)),
            None => (0.0, None),
        };
        let mut second = 0.0;
        let mut parts: Vec<(usize, f64, f64)> = Vec::with_capacity(n);
        for j in 0..n {
            let mut qx = self.q[i][j] + self.gamma[i][j] / x;
            let mut mu = self.cross[i][j];
            if let Some(p) = pert {
                qx += p.q[i][j] * pert_scale;
            }
            if j == self.anchor[i] {
                mu += self.e[i] / x;
                if let Some(p) = pert {
                    mu += p.drift[i] * pert_scale;
                }
            }
            if qx < 0.0 || qx > 1.0 {
                return Err(Error::Domain {
                    x,
                    line,
                    reason: format!("q_{i}{j}(x) = {qx} is not a probability; raise x"),
                });
            }
            if qx == 0.0 {
                if mu != 0.0 {
                    return Err(Error::Domain {
                        x,
                        line,
                        reason: format!("mu_{i}{j}(x) = {mu} with q_{i}{j}(x) = 0"),
                    });
                }
                continue;
            }
            let m = mu / qx;
            second += qx * m * m;
            parts.push((j, qx, m));
        }
        let s2 = self.t2[i] - second;
        if s2 < -1e-12 {
            return Err(Error::InvalidModel(format!(
                "t_{i}^2 = {} is smaller than the squared mean displacement {second}",
                self.t2[i]
            )));
        }
        let s = s2.max(0.0).sqrt();
        for (j, qx, m) in parts {
            if s > 0.0 {
                out.push(Jump {
                    y: x + m + s,
                    line: j,
                    prob: 0.5 * qx,
                });
                out.push(Jump {
                    y: x + m - s,
                    line: j,
                    prob: 0.5 * qx,
                });
            } else {
                out.push(Jump {
                    y: x + m,
                    line: j,
                    prob: qx,
                });
            }
        }
        if out.iter().any(|j| j.y < 0.0) {
            return Err(Error::Domain {
                x,
                line,
                reason: "synthetic jump leaves the half strip".into(),
            });
        }
        Ok(())
    }
}

/// The line-shifted chain `(X_n + a_{eta_n}, eta_n)` of a base kernel.
///
/// Shifts are translated so the smallest is zero, which keeps every state of
/// the shifted chain inside the half strip.
#[derive(Debug, Clone)]
pub struct ShiftedKernel {
    base: Arc<dyn Kernel>,
    shifts: Vec<f64>,
}

impl ShiftedKernel {
    pub fn new(base: Arc<dyn Kernel>, shifts: &[f64]) -> Result<Self> {
        if shifts.len() != base.num_lines() {
            return Err(Error::InvalidModel("one shift per line required".into()));
        }
        let lo = shifts.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            base,
            shifts: shifts.iter().map(|a| a - lo).collect(),
        })
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }
}

impl Kernel for ShiftedKernel {
    fn num_lines(&self) -> usize {
        self.base.num_lines()
    }

    fn line_labels(&self) -> Vec<String> {
        self.base.line_labels()
    }

    fn jumps_into(&self, x: f64, line: usize, out: &mut Vec<Jump>) -> Result<()> {
        let base_x = x - self.shifts[line];
        if base_x < 0.0 {
            return Err(Error::Domain {
                x,
                line,
                reason: format!("below the shifted origin {}", self.shifts[line]),
            });
        }
        self.base.jumps_into(base_x, line, out)?;
        for j in out.iter_mut() {
            j.y += self.shifts[j.line];
        }
        Ok(())
    }
}
