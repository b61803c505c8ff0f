use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::integrate;

/// How to evaluate the symmetric stable density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StableRoute {
    /// Series for large `|x|`, cosine quadrature otherwise, falling back to
    /// the Zolotarev integral when the cosine integral has too many lobes.
    Auto,
    /// `(1/pi) int_0^T exp(-c t^alpha) cos(t x) dt`, split at the zeros of `cos(t x)`.
    Quadrature,
    /// Convergent large-`|x|` expansion.
    Series,
    /// Zolotarev's non-oscillatory integral over `(0, pi/2)`.
    Zolotarev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableOptions {
    pub route: StableRoute,
    /// Largest number of half-periods the cosine quadrature may split into.
    pub max_pieces: usize,
    /// Use the series once `c |x|^(-alpha)` is at most this.
    pub series_threshold: f64,
}

impl Default for StableOptions {
    fn default() -> Self {
        Self {
            route: StableRoute::Auto,
            max_pieces: 20_000,
            series_threshold: 0.25,
        }
    }
}

fn check(alpha: f64, c: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {c}")));
    }
    Ok(())
}

/// Density `g` of the symmetric stable law with characteristic function
/// `exp(-c |t|^alpha)`.
pub fn stable_density(x: f64, alpha: f64, c: f64) -> Result<f64> {
    stable_density_with(x, alpha, c, &StableOptions::default())
}

/// Centre-of-mass limit density `(alpha+1)^(1/alpha) g((alpha+1)^(1/alpha) x)`.
pub fn stable_density_com(x: f64, alpha: f64, c: f64) -> Result<f64> {
    check(alpha, c)?;
    let k = (alpha + 1.0).powf(1.0 / alpha);
    Ok(k * stable_density(k * x, alpha, c)?)
}

/// The same density, computed as the stable density with characteristic
/// function `exp(-c |t|^alpha / (alpha + 1))`.
pub fn stable_density_com_direct(x: f64, alpha: f64, c: f64) -> Result<f64> {
    check(alpha, c)?;
    stable_density(x, alpha, c / (alpha + 1.0))
}

pub fn stable_density_with(x: f64, alpha: f64, c: f64, opts: &StableOptions) -> Result<f64> {
    check(alpha, c)?;
    if !x.is_finite() {
        return Err(Error::Config("x must be finite".into()));
    }
    let ax = x.abs();
    match opts.route {
        StableRoute::Quadrature => cosine_quadrature(ax, alpha, c, opts.max_pieces),
        StableRoute::Series => series(ax, alpha, c),
        StableRoute::Zolotarev => zolotarev(ax, alpha, c),
        StableRoute::Auto => {
            if ax > 0.0 && c * ax.powf(-alpha) <= opts.series_threshold {
                series(ax, alpha, c)
            } else {
                match cosine_quadrature(ax, alpha, c, opts.max_pieces) {
                    Err(Error::Quadrature(_)) if ax > 0.0 => zolotarev(ax, alpha, c),
                    other => other,
                }
            }
        }
    }
}

fn cosine_quadrature(x: f64, alpha: f64, c: f64, max_pieces: usize) -> Result<f64> {
    // exp(-c T^alpha) = 1e-12
    let t_max = (-(1e-12f64).ln() / c).powf(1.0 / alpha);
    let f = |t: f64| (-c * t.powf(alpha)).exp() * (t * x).cos();
    if x == 0.0 {
        return Ok(integrate(f, 0.0, t_max, 1e-14, 1e-13, 2000)? / PI);
    }
    let half = PI / x;
    let pieces = (t_max / half + 0.5).ceil();
    if pieces > max_pieces as f64 {
        return Err(Error::Quadrature(format!(
            "cosine integral needs {pieces:.0} pieces (budget {max_pieces}) at x={x}, alpha={alpha}, c={c}"
        )));
    }
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut k = 0.0;
    while lo < t_max {
        let hi = ((k + 0.5) * half).min(t_max);
        total += integrate(f, lo, hi, 1e-15, 1e-12, 200)?;
        lo = hi;
        k += 1.0;
    }
    Ok(total / PI)
}

/// `g(x) = (1/pi) sum_k (-1)^(k+1) Gamma(alpha k + 1)/k! sin(pi alpha k / 2) c^k |x|^(-alpha k - 1)`.
fn series(x: f64, alpha: f64, c: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::Config("series route needs x != 0".into()));
    }
    let lx = x.ln();
    let lc = c.ln();
    let mut sum = 0.0;
    for k in 1..=400 {
        let kf = k as f64;
        let lmag = ln_gamma(alpha * kf + 1.0) - ln_gamma(kf + 1.0) + kf * lc - (alpha * kf + 1.0) * lx;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * lmag.exp() * (FRAC_PI_2 * alpha * kf).sin();
        sum += term;
        if k > 3 && lmag.exp() < 1e-17 * sum.abs() {
            return Ok(sum / PI);
        }
    }
    Err(Error::Quadrature(format!("series did not converge at x={x}")))
}

/// One-sided tail `P(X > x)` for `x > 0` from term-wise integration of the
/// series; valid where the series route is (large `x`).
pub fn stable_tail(x: f64, alpha: f64, c: f64) -> Result<f64> {
    check(alpha, c)?;
    if !(x > 0.0) {
        return Err(Error::Config("tail needs x > 0".into()));
    }
    let lx = x.ln();
    let lc = c.ln();
    let mut sum = 0.0;
    for k in 1..=400 {
        let kf = k as f64;
        let lmag = ln_gamma(alpha * kf + 1.0) - ln_gamma(kf + 1.0) + kf * lc - alpha * kf * lx;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * lmag.exp() * (FRAC_PI_2 * alpha * kf).sin() / (alpha * kf);
        sum += term;
        if k > 3 && (lmag.exp() / (alpha * kf)) < 1e-17 * sum.abs() {
            return Ok(sum / PI);
        }
    }
    Err(Error::Quadrature(format!("tail series did not converge at x={x}")))
}

/// Zolotarev's integral for the symmetric case, standardised to unit scale:
/// `g_1(y) = alpha y^(1/(alpha-1)) / (pi |alpha-1|) int_0^(pi/2) V exp(-y^(alpha/(alpha-1)) V)`
/// with `V(th) = (cos th / sin(alpha th))^(alpha/(alpha-1)) cos((alpha-1) th) / cos th`.
fn zolotarev(x: f64, alpha: f64, c: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::Config("Zolotarev route needs x != 0".into()));
    }
    let s = c.powf(1.0 / alpha);
    let y = x / s;
    let e = alpha / (alpha - 1.0);
    let yy = y.powf(e);
    let v = |th: f64| (th.cos() / (alpha * th).sin()).powf(e) * ((alpha - 1.0) * th).cos() / th.cos();
    let f = |th: f64| {
        let vv = v(th);
        let r = vv * (-yy * vv).exp();
        if r.is_finite() {
            r
        } else {
            0.0
        }
    };
    let eps = 1e-15;
    let integral = integrate(f, eps, FRAC_PI_2 - eps, 1e-16, 1e-12, 4000)?;
    Ok(alpha * y.powf(1.0 / (alpha - 1.0)) / (PI * (1.0 - alpha)) * integral / s)
}
