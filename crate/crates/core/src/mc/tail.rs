use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailOptions {
    /// Lower end of the regression window, as a quantile of all samples.
    pub quantile: f64,
    /// Upper end: the largest `t` with at least this many samples above it.
    pub min_survivors: usize,
    /// Number of log-spaced evaluation points in the window.
    pub n_grid: usize,
    /// Estimates above this are reported as a light (non power-law) tail.
    pub light_tail_bound: f64,
    pub min_uncensored: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            quantile: 0.9,
            min_survivors: 10,
            n_grid: 25,
            light_tail_bound: 3.0,
            min_uncensored: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub theta_hat: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub n_uncensored: usize,
    pub censored_fraction: f64,
    pub light_tail: bool,
}

pub fn estimate_tail_index(tau: &[Option<u64>]) -> Result<TailEstimate> {
    estimate_tail_index_with(tau, &TailOptions::default())
}

/// Log-log least-squares slope of the empirical survival function
/// `P(tau > t)`, sign flipped, over `[t_q, t_max]`.
///
/// Censored samples (`None`) count as survivors everywhere in the window but
/// never serve as regression points; the window ends below the step cap.
pub fn estimate_tail_index_with(tau: &[Option<u64>], opts: &TailOptions) -> Result<TailEstimate> {
    let mut obs: Vec<f64> = tau.iter().filter_map(|t| t.map(|v| v as f64)).collect();
    let n_unc = obs.len();
    if n_unc < opts.min_uncensored.max(2) {
        return Err(Error::InsufficientData {
            got: n_unc,
            need: opts.min_uncensored,
        });
    }
    obs.sort_by(f64::total_cmp);
    let total = tau.len();
    let n_cens = total - n_unc;

    // samples above t, censored ones included
    let survivors = |t: f64| -> usize { n_unc - obs.partition_point(|&v| v <= t) + n_cens };

    let q_idx = ((opts.quantile * total as f64).ceil() as usize).clamp(1, total) - 1;
    if q_idx >= n_unc {
        return Err(Error::InsufficientData {
            got: n_unc,
            need: q_idx + 1,
        });
    }
    let t_lo = obs[q_idx];
    // largest uncensored value with enough samples strictly above it
    let hi_idx = obs.partition_point(|&v| survivors(v) >= opts.min_survivors);
    let t_hi = if hi_idx == 0 { t_lo } else { obs[hi_idx - 1] };
    if !(t_hi > 1.5 * t_lo) {
        return Err(Error::InsufficientData {
            got: n_unc,
            need: n_unc + 1,
        });
    }

    let (l0, l1) = (t_lo.ln(), t_hi.ln());
    let mut xs = Vec::with_capacity(opts.n_grid);
    let mut ys = Vec::with_capacity(opts.n_grid);
    for k in 0..opts.n_grid {
        let t = (l0 + (l1 - l0) * k as f64 / (opts.n_grid - 1) as f64).exp();
        let s = survivors(t);
        if s > 0 {
            xs.push(t.ln());
            ys.push((s as f64 / total as f64).ln());
        }
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icept - slope * x).powi(2)).sum();
    let stderr = if m > 2.0 { (rss / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    let theta_hat = -slope;
    Ok(TailEstimate {
        theta_hat,
        stderr,
        window: (t_lo, t_hi),
        n_uncensored: n_unc,
        censored_fraction: n_cens as f64 / total as f64,
        light_tail: theta_hat > opts.light_tail_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pareto_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let theta: f64 = 0.8;
        let s: Vec<Option<u64>> = (0..100_000)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                Some(u.powf(-1.0 / theta).ceil() as u64)
            })
            .collect();
        let est = estimate_tail_index(&s).unwrap();
        assert!((est.theta_hat - theta).abs() < 0.05, "{est:?}");
        assert!(!est.light_tail);
    }

    #[test]
    fn exponential_is_light() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<Option<u64>> = (0..100_000)
            .map(|_| Some((-(1.0 - rng.random::<f64>()).ln() * 20.0).ceil() as u64))
            .collect();
        let est = estimate_tail_index(&s).unwrap();
        assert!(est.light_tail, "{est:?}");
    }

    #[test]
    fn censoring_is_excluded_and_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cap = 20_000u64;
        let s: Vec<Option<u64>> = (0..50_000)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                let t = u.powf(-1.0 / 0.6).ceil() as u64;
                (t <= cap).then_some(t)
            })
            .collect();
        let cens = s.iter().filter(|t| t.is_none()).count() as f64 / s.len() as f64;
        let est = estimate_tail_index(&s).unwrap();
        assert!(cens > 0.001);
        assert_eq!(est.censored_fraction, cens);
        assert!(est.window.1 <= cap as f64);
        assert!((est.theta_hat - 0.6).abs() < 0.05, "{est:?}");
    }

    #[test]
    fn too_few_samples() {
        let s: Vec<Option<u64>> = (1..500).map(Some).collect();
        assert!(matches!(estimate_tail_index(&s), Err(Error::InsufficientData { .. })));
    }
}
