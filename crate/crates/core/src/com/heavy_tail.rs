use rand::Rng;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Default table size for the exact inverse-CDF part of the sampler.
pub const DEFAULT_TABLE: usize = 1_000_000;
const TAIL_CAP: f64 = 4_611_686_018_427_387_904.0; // 2^62

/// Riemann zeta for `s > 1` by Euler–Maclaurin summation.
pub fn zeta(s: f64) -> f64 {
    const N: usize = 20;
    // B_2j / (2j)!
    const C: [f64; 5] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
    ];
    let nf = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    sum += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    let mut rising = s; // s (s+1) ... (s+2j-2)
    for (j, c) in C.iter().enumerate() {
        sum += c * rising * nf.powf(-s - (2 * j + 1) as f64);
        let m = (2 * j + 1) as f64;
        rising *= (s + m) * (s + m + 1.0);
    }
    sum
}

/// Sampler for the symmetric integer law `P(X = k) = |k|^(-1-alpha) / (2 zeta(1+alpha))`,
/// `k != 0`, `alpha` in `(0, 1)`.
///
/// `|X| <= K` is drawn by exact inverse CDF on a table; beyond `K` the
/// magnitude is `round((K + 1/2) V^(-1/alpha))` for uniform `V`, the Pareto
/// extension matching the table's tail mass (capped at `2^62`).
#[derive(Debug, Clone)]
pub struct HeavyTail {
    alpha: f64,
    zeta: f64,
    cdf: Vec<f64>,
}

impl HeavyTail {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_table(alpha, DEFAULT_TABLE)
    }

    pub fn with_table(alpha: f64, k_max: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidModel(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if k_max == 0 {
            return Err(Error::InvalidModel("table size must be positive".into()));
        }
        let z = zeta(1.0 + alpha);
        let mut cdf = Vec::with_capacity(k_max);
        // Summing smallest terms first would be more accurate, but the
        // running error stays well below 1e-13 at this length.
        let mut acc = 0.0;
        for k in 1..=k_max {
            acc += (k as f64).powf(-1.0 - alpha) / z;
            cdf.push(acc);
        }
        Ok(Self { alpha, zeta: z, cdf })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn table_size(&self) -> usize {
        self.cdf.len()
    }

    /// Probability mass beyond the table, `P(|X| > K)`.
    pub fn tail_mass(&self) -> f64 {
        (1.0 - self.cdf[self.cdf.len() - 1]).max(0.0)
    }

    /// `P(X = k)`.
    pub fn pmf(&self, k: i64) -> f64 {
        if k == 0 {
            0.0
        } else {
            (k.unsigned_abs() as f64).powf(-1.0 - self.alpha) / (2.0 * self.zeta)
        }
    }

    /// Scale `c` of the stable limit: `S_n / n^(1/alpha)` has characteristic
    /// function tending to `exp(-c |t|^alpha)` with
    /// `c = Gamma(1-alpha) cos(pi alpha / 2) / (alpha zeta(1+alpha))`.
    pub fn stable_scale(&self) -> f64 {
        let a = self.alpha;
        gamma(1.0 - a) * (std::f64::consts::FRAC_PI_2 * a).cos() / (a * self.zeta)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let r: u64 = rng.random();
        let negative = r & 1 == 1;
        let u = (r >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
        let top = self.cdf[self.cdf.len() - 1];
        let mag = if u < top {
            (self.cdf.partition_point(|&c| c <= u) + 1) as f64
        } else {
            let k = (self.cdf.len() as f64) + 0.5;
            let v = ((1.0 - u) / (1.0 - top)).clamp(f64::MIN_POSITIVE, 1.0);
            (k * v.powf(-1.0 / self.alpha)).round().min(TAIL_CAP)
        };
        let m = mag as i64;
        if negative {
            -m
        } else {
            m
        }
    }
}

/// Draws one increment from `law`.
pub fn sample_heavy_tail_increment<R: Rng + ?Sized>(law: &HeavyTail, rng: &mut R) -> i64 {
    law.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-12);
        assert!((zeta(4.0) - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-13);
    }

    #[test]
    fn table_deficit_is_small() {
        let h = HeavyTail::new(0.5).unwrap();
        assert!(h.tail_mass() < 10f64.powf(-6.0 * 0.5));
        assert!(h.tail_mass() > 0.0);
    }

    #[test]
    fn symmetric_and_nonzero() {
        let h = HeavyTail::with_table(0.5, 10_000).unwrap();
        let mut rng = stream_rng(1, 0);
        let n = 100_000;
        let mut pos = 0i64;
        for _ in 0..n {
            let x = h.sample(&mut rng);
            assert_ne!(x, 0);
            pos += x.signum();
        }
        assert!((pos as f64).abs() < 4.0 * (n as f64).sqrt());
    }

    #[test]
    fn small_values_match_pmf() {
        let h = HeavyTail::with_table(0.3, 1000).unwrap();
        let mut rng = stream_rng(2, 0);
        let n = 200_000;
        let ones = (0..n).filter(|_| h.sample(&mut rng).abs() == 1).count() as f64 / n as f64;
        let p = 2.0 * h.pmf(1);
        assert!((ones - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }
}
