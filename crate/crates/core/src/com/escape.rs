use rayon::prelude::*;
use serde::Serialize;

use super::IncrementLaw;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeFit {
    /// Mean of the per-path slopes.
    pub slope: f64,
    /// 95% normal interval `slope +- 1.96 sd / sqrt(m)`.
    pub ci: (f64, f64),
    pub sd: f64,
    pub n_paths: usize,
    /// Paths with fewer than two usable checkpoints are dropped.
    pub n_paths_used: usize,
    pub checkpoints: Vec<u64>,
    pub per_path: Vec<f64>,
    /// Checkpoint observations discarded because `G_n = 0`.
    pub zero_hits: usize,
}

/// `count` geometrically spaced integers in `[lo, hi]`, deduplicated.
pub fn geometric_checkpoints(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    let lo = lo.max(1);
    if count <= 1 || hi <= lo {
        return vec![hi.max(lo)];
    }
    let r = (hi as f64 / lo as f64).ln();
    let mut v: Vec<u64> = (0..count)
        .map(|k| ((lo as f64) * (r * k as f64 / (count - 1) as f64).exp()).round() as u64)
        .map(|n| n.clamp(lo, hi))
        .collect();
    v.dedup();
    v
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let m = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-path least squares of `log ||G_n||` on `log n` over `n_checkpoints`
/// geometric checkpoints in `[n_max/100, n_max]`; path `k` uses stream `k`.
pub fn escape_exponent(
    law: &IncrementLaw,
    n_max: u64,
    n_checkpoints: usize,
    n_paths: usize,
    seed: u64,
) -> Result<EscapeFit> {
    let d = law.dim();
    if d < 2 {
        return Err(Error::Config("escape exponent needs d >= 2".into()));
    }
    if n_max < 100 || n_checkpoints < 2 || n_paths < 2 {
        return Err(Error::Config("need n_max >= 100, at least 2 checkpoints and 2 paths".into()));
    }
    let cps = geometric_checkpoints(n_max / 100, n_max, n_checkpoints);
    let logs: Vec<f64> = cps.iter().map(|&n| (n as f64).ln()).collect();
    let fits: Vec<(Option<f64>, usize)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(seed, p);
            let mut s = vec![0.0; d];
            let mut y = vec![0.0; d];
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            let mut zeros = 0;
            let mut next = 0;
            for n in 1..=n_max {
                law.step(&mut rng, &mut s);
                for (a, v) in y.iter_mut().zip(&s) {
                    *a += v;
                }
                if n == cps[next] {
                    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt() / n as f64;
                    if norm > 0.0 {
                        xs.push(logs[next]);
                        ys.push(norm.ln());
                    } else {
                        zeros += 1;
                    }
                    next += 1;
                    if next == cps.len() {
                        break;
                    }
                }
            }
            (ols_slope(&xs, &ys), zeros)
        })
        .collect();
    let zero_hits = fits.iter().map(|f| f.1).sum();
    let per_path: Vec<f64> = fits.into_iter().filter_map(|f| f.0).collect();
    let m = per_path.len();
    if m < 2 {
        return Err(Error::InsufficientData { got: m, need: 2 });
    }
    let slope = per_path.iter().sum::<f64>() / m as f64;
    let sd = (per_path.iter().map(|s| (s - slope).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
    let half = 1.96 * sd / (m as f64).sqrt();
    Ok(EscapeFit {
        slope,
        ci: (slope - half, slope + half),
        sd,
        n_paths,
        n_paths_used: m,
        checkpoints: cps,
        per_path,
        zero_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::com::TableLaw;

    #[test]
    fn ballistic_slope_is_one() {
        let law = IncrementLaw::Table(TableLaw::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap());
        let fit = escape_exponent(&law, 100_000, 10, 4, 1).unwrap();
        // G_n = (n+1)/2 e_1
        assert!((fit.slope - 1.0).abs() < 1e-3, "{}", fit.slope);
        assert!(fit.sd < 1e-12);
    }

    #[test]
    fn checkpoints_are_geometric() {
        let c = geometric_checkpoints(100, 10_000, 3);
        assert_eq!(c, vec![100, 1000, 10_000]);
    }

    #[test]
    fn one_dimension_rejected() {
        let law = IncrementLaw::Table(TableLaw::ssrw(1).unwrap());
        assert!(escape_exponent(&law, 1000, 5, 5, 1).is_err());
    }
}
