use serde::Serialize;

use super::IncrementLaw;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceProbe {
    pub x: f64,
    /// Powers of ten up to `n_max`, then `n_max` itself.
    pub checkpoints: Vec<u64>,
    /// `min_{m <= n} |G_m - x|` at each checkpoint; nonincreasing.
    pub running_min: Vec<f64>,
    /// Minimum over the window `(previous checkpoint, n]`.
    pub window_min: Vec<f64>,
}

impl RecurrenceProbe {
    pub fn running_min_at(&self, n: u64) -> Option<f64> {
        self.checkpoints.iter().position(|&c| c == n).map(|i| self.running_min[i])
    }

    pub fn window_min_at(&self, n: u64) -> Option<f64> {
        self.checkpoints.iter().position(|&c| c == n).map(|i| self.window_min[i])
    }
}

/// Tracks `|G_n - x|` for one path of a one-dimensional walk, recorded at
/// decade checkpoints.
pub fn recurrence_probe_1d(law: &IncrementLaw, x: f64, n_max: u64, seed: u64) -> Result<RecurrenceProbe> {
    if law.dim() != 1 {
        return Err(Error::Config("recurrence probe needs d = 1".into()));
    }
    if n_max == 0 {
        return Err(Error::Config("n_max must be positive".into()));
    }
    let mut checkpoints = Vec::new();
    let mut c = 10u64;
    while c < n_max {
        checkpoints.push(c);
        c = c.saturating_mul(10);
    }
    checkpoints.push(n_max);

    let mut rng = stream_rng(seed, 0);
    let mut s = [0.0];
    let mut y = 0.0;
    let mut run = f64::INFINITY;
    let mut win = f64::INFINITY;
    let (mut running_min, mut window_min) = (Vec::new(), Vec::new());
    let mut next = 0;
    for n in 1..=n_max {
        law.step(&mut rng, &mut s);
        y += s[0];
        let dist = (y / n as f64 - x).abs();
        win = win.min(dist);
        if n == checkpoints[next] {
            run = run.min(win);
            running_min.push(run);
            window_min.push(win);
            win = f64::INFINITY;
            next += 1;
        }
    }
    Ok(RecurrenceProbe {
        x,
        checkpoints,
        running_min,
        window_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::com::TableLaw;

    #[test]
    fn unreachable_target() {
        let law = IncrementLaw::Table(TableLaw::ssrw(1).unwrap());
        let p = recurrence_probe_1d(&law, 1000.0, 1000, 2).unwrap();
        assert_eq!(p.checkpoints, vec![10, 100, 1000]);
        // |G_n| <= max |S_i| <= n gives |G_n| <= (n+1)/2 for nearest-neighbour steps
        assert!(p.running_min.iter().all(|&m| m >= 1000.0 - 500.5));
        assert!(p.running_min.windows(2).all(|w| w[1] <= w[0]));
    }
}
