//! Half-strip Markov chains: states `(x, i)` with `x >= 0` and `i` one of a
//! finite set of lines.
//!
//! A model is a jump kernel with finite support per state. Moments of the
//! horizontal increment are computed exactly by summing over that support,
//! which is what the drift-profile fit and the Lyapunov diagnostics build on.

mod kernels;
mod lyapunov;
mod moments;
mod profile;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kernels::{CorrelatedRw, Perturbation, ShiftedKernel, SyntheticKernel, Tabular, TabularJump, TabularState};
pub use lyapunov::{
    lyapunov_drift_check, lyapunov_value, negative_drift_shifts, predicted_increment, DriftCheck, LocalConstants,
    LyapunovKind, LyapunovSpec,
};
pub use moments::{empirical_moments, Moments};
pub use profile::{fit_drift_profile, fit_drift_profile_with, DriftProfile, FitOptions, FitResiduals, FittedProfile, Regime};

/// Stochastic-row tolerance for kernel weights.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// One support point of the kernel at a given state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub y: f64,
    pub line: usize,
    pub prob: f64,
}

/// A finite-support transition kernel on a half strip.
///
/// Implementations must be pure: the same `(x, line)` always yields the same
/// support, so models can be shared across simulation threads.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn num_lines(&self) -> usize;

    fn line_labels(&self) -> Vec<String> {
        (0..self.num_lines()).map(|i| i.to_string()).collect()
    }

    /// Writes the support of the kernel at `(x, line)` into `out` (cleared first).
    fn jumps_into(&self, x: f64, line: usize, out: &mut Vec<Jump>) -> Result<()>;
}

/// Moment-order and rate metadata carried alongside a model.
///
/// `p` is the order of the uniformly bounded increment moment; bounded-jump
/// kernels have every moment, encoded as `p = +inf` (`null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityParams {
    #[serde(with = "inf_as_null", default = "infinite")]
    pub p: f64,
    #[serde(default)]
    pub c_p: Option<f64>,
    #[serde(default)]
    pub deltas: Vec<Option<f64>>,
}

fn infinite() -> f64 {
    f64::INFINITY
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for RegularityParams {
    fn default() -> Self {
        Self {
            p: f64::INFINITY,
            c_p: None,
            deltas: Vec::new(),
        }
    }
}

impl RegularityParams {
    pub fn with_p(p: f64) -> Result<Self> {
        let r = Self {
            p,
            ..Self::default()
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::InvalidModel(format!("moment order p must exceed 1, got {}", self.p)));
        }
        if self.deltas.len() > 5 {
            return Err(Error::InvalidModel("at most five rates (delta_0..delta_4)".into()));
        }
        for (k, d) in self.deltas.iter().enumerate() {
            if let Some(d) = d {
                if !(*d > 0.0 && *d < 1.0) {
                    return Err(Error::InvalidModel(format!("delta_{k} = {d} is not in (0,1)")));
                }
            }
        }
        Ok(())
    }
}

/// A half-strip Markov chain: ordered lines, a jump kernel and regularity metadata.
#[derive(Debug, Clone)]
pub struct HalfStripModel {
    lines: Vec<String>,
    kernel: Arc<dyn Kernel>,
    pub regularity: RegularityParams,
}

impl HalfStripModel {
    pub fn new(kernel: impl Kernel + 'static) -> Self {
        Self::from_arc(Arc::new(kernel))
    }

    pub fn from_arc(kernel: Arc<dyn Kernel>) -> Self {
        Self {
            lines: kernel.line_labels(),
            kernel,
            regularity: RegularityParams::default(),
        }
    }

    pub fn with_regularity(mut self, regularity: RegularityParams) -> Result<Self> {
        regularity.validate()?;
        self.regularity = regularity;
        Ok(self)
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    /// Raw support at `(x, line)` into a reusable buffer. No validation beyond
    /// what the kernel itself performs; this is the simulation hot path.
    #[inline]
    pub fn jumps_into(&self, x: f64, line: usize, out: &mut Vec<Jump>) -> Result<()> {
        self.check_state(x, line)?;
        self.kernel.jumps_into(x, line, out)
    }

    /// Validated support at `(x, line)`: weights nonnegative and summing to 1,
    /// every target inside the half strip.
    pub fn transitions(&self, x: f64, line: usize) -> Result<Vec<Jump>> {
        let mut out = Vec::new();
        self.jumps_into(x, line, &mut out)?;
        let mut total = 0.0;
        for j in &out {
            if !(j.prob >= 0.0) || !j.prob.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "negative or non-finite weight {} at (x={x}, line={line})",
                    j.prob
                )));
            }
            if !(j.y >= 0.0) || !j.y.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "jump from (x={x}, line={line}) lands at y={} outside the half strip",
                    j.y
                )));
            }
            if j.line >= self.num_lines() {
                return Err(Error::InvalidModel(format!(
                    "jump from (x={x}, line={line}) targets unknown line {}",
                    j.line
                )));
            }
            total += j.prob;
        }
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "kernel weights at (x={x}, line={line}) sum to {total}"
            )));
        }
        Ok(out)
    }

    fn check_state(&self, x: f64, line: usize) -> Result<()> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Domain {
                x,
                line,
                reason: "horizontal coordinate must be finite and nonnegative".into(),
            });
        }
        if line >= self.num_lines() {
            return Err(Error::Domain {
                x,
                line,
                reason: format!("model has {} lines", self.num_lines()),
            });
        }
        Ok(())
    }

    /// Checks local finiteness on the given states: the support reachable in one
    /// step from the probed states, below each level `c`, is a finite set.
    /// Returns the number of distinct support points found with `y <= level`.
    pub fn local_support_count(&self, states: &[(f64, usize)], level: f64) -> Result<usize> {
        let mut seen: Vec<(u64, usize)> = Vec::new();
        for &(x, i) in states {
            for j in self.transitions(x, i)? {
                if j.y <= level {
                    seen.push((j.y.to_bits(), j.line));
                }
            }
        }
        seen.sort_unstable();
        seen.dedup();
        Ok(seen.len())
    }
}
