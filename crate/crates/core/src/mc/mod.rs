//! Seeded Monte Carlo ensembles of half-strip chains.

mod ks;
mod tail;

pub use ks::{ks_two_sample, KsResult};
pub use tail::{estimate_tail_index, estimate_tail_index_with, TailEstimate, TailOptions};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HalfStripModel, Jump};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: u64,
    #[serde(default = "default_start")]
    pub start: (f64, usize),
    #[serde(default = "default_level")]
    pub tau_level: f64,
    /// Steps at which `X_n` is recorded.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    /// End each path at its passage time instead of running `n_steps`.
    #[serde(default)]
    pub stop_at_tau: bool,
}

fn default_start() -> (f64, usize) {
    (1.0, 0)
}

fn default_level() -> f64 {
    1.0
}

impl SimulationPlan {
    pub fn new(seed: u64, n_paths: usize, n_steps: u64) -> Self {
        Self {
            seed,
            n_paths,
            n_steps,
            start: default_start(),
            tau_level: default_level(),
            checkpoints: Vec::new(),
            stop_at_tau: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if !(self.tau_level >= 0.0) {
            return Err(Error::Config("tau_level must be nonnegative".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("checkpoints must be strictly increasing".into()));
        }
        if self.checkpoints.iter().any(|&c| c == 0 || c > self.n_steps) {
            return Err(Error::Config("checkpoints must lie in 1..=n_steps".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub path_id: usize,
    pub steps: u64,
    pub final_x: f64,
    pub final_line: usize,
    /// `min{n >= 1 : X_n <= level}`, or `None` if censored at the step cap.
    pub tau: Option<u64>,
    /// Fraction of the times `1..=steps` spent on each line.
    pub occupation: Vec<f64>,
    pub max_x: f64,
    /// `X_n` at the plan's checkpoints; `NaN` where the path stopped earlier.
    pub checkpoint_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub plan: SimulationPlan,
    pub paths: Vec<PathResult>,
}

impl EnsembleResult {
    pub fn tau_samples(&self) -> Vec<Option<u64>> {
        self.paths.iter().map(|p| p.tau).collect()
    }

    pub fn uncensored_tau(&self) -> Vec<f64> {
        self.paths.iter().filter_map(|p| p.tau.map(|t| t as f64)).collect()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.paths.iter().filter(|p| p.tau.is_none()).count() as f64 / self.paths.len() as f64
    }

    /// Fraction of paths whose passage time is at most `cap`.
    pub fn hit_fraction(&self, cap: u64) -> f64 {
        self.paths.iter().filter(|p| p.tau.is_some_and(|t| t <= cap)).count() as f64 / self.paths.len() as f64
    }

    /// `E[min(tau, cap)]` over the ensemble; needs `cap <= n_steps`.
    pub fn truncated_mean_tau(&self, cap: u64) -> f64 {
        let cap = cap.min(self.plan.n_steps);
        let s: f64 = self.paths.iter().map(|p| p.tau.map_or(cap, |t| t.min(cap)) as f64).sum();
        s / self.paths.len() as f64
    }

    /// Ensemble mean of `X_n` at each checkpoint, over paths still running.
    pub fn mean_at_checkpoints(&self) -> Vec<f64> {
        (0..self.plan.checkpoints.len())
            .map(|k| {
                let (s, c) = self
                    .paths
                    .iter()
                    .map(|p| p.checkpoint_x[k])
                    .filter(|x| !x.is_nan())
                    .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
                s / c as f64
            })
            .collect()
    }
}

/// Pooled per-line time fractions across the ensemble.
pub fn occupation_fractions(result: &EnsembleResult) -> Vec<f64> {
    let n = result.paths.first().map_or(0, |p| p.occupation.len());
    let mut acc = vec![0.0; n];
    let mut total = 0.0;
    for p in &result.paths {
        let w = p.steps as f64;
        for (a, f) in acc.iter_mut().zip(&p.occupation) {
            *a += w * f;
        }
        total += w;
    }
    acc.iter().map(|a| a / total).collect()
}

#[inline]
fn pick(jumps: &[Jump], u: f64) -> &Jump {
    let mut acc = 0.0;
    for j in &jumps[..jumps.len() - 1] {
        acc += j.prob;
        if u < acc {
            return j;
        }
    }
    &jumps[jumps.len() - 1]
}

fn run_path(model: &HalfStripModel, plan: &SimulationPlan, path_id: usize) -> Result<PathResult> {
    let mut rng = stream_rng(plan.seed, path_id as u64);
    let (mut x, mut line) = plan.start;
    let mut buf = Vec::with_capacity(8);
    let mut time_on = vec![0u64; model.num_lines()];
    let mut tau = None;
    let mut max_x = x;
    let mut checkpoint_x = vec![f64::NAN; plan.checkpoints.len()];
    let mut next_cp = 0;
    let mut steps = 0;
    for n in 1..=plan.n_steps {
        model.jumps_into(x, line, &mut buf).map_err(|e| Error::Simulation {
            path: path_id,
            step: n,
            source: Box::new(e),
        })?;
        if buf.is_empty() {
            return Err(Error::Simulation {
                path: path_id,
                step: n,
                source: Box::new(Error::InvalidModel("empty support".into())),
            });
        }
        let j = *pick(&buf, rng.random::<f64>());
        x = j.y;
        line = j.line;
        steps = n;
        time_on[line] += 1;
        max_x = max_x.max(x);
        if next_cp < plan.checkpoints.len() && plan.checkpoints[next_cp] == n {
            checkpoint_x[next_cp] = x;
            next_cp += 1;
        }
        if tau.is_none() && x <= plan.tau_level {
            tau = Some(n);
            if plan.stop_at_tau {
                break;
            }
        }
    }
    Ok(PathResult {
        path_id,
        steps,
        final_x: x,
        final_line: line,
        tau,
        occupation: time_on.iter().map(|&t| t as f64 / steps as f64).collect(),
        max_x,
        checkpoint_x,
    })
}

/// Runs `plan.n_paths` independent paths in parallel. Path `k` uses random
/// stream `k` of `plan.seed`, so the result is bit-identical for a given
/// model and plan regardless of thread count.
pub fn simulate(model: &HalfStripModel, plan: &SimulationPlan) -> Result<EnsembleResult> {
    plan.validate()?;
    model.transitions(plan.start.0, plan.start.1)?;
    let paths = (0..plan.n_paths)
        .into_par_iter()
        .map(|k| run_path(model, plan, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult {
        plan: plan.clone(),
        paths,
    })
}
