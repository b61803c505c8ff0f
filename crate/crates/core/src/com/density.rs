use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Gaussian density with covariance `cov` at `x`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    chol: Cholesky<f64, nalgebra::Dyn>,
    norm: f64,
}

impl Gaussian {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        if d == 0 || cov.ncols() != d {
            return Err(Error::Singular("covariance must be a non-empty square matrix".into()));
        }
        if (cov - cov.transpose()).abs().max() > 1e-12 * (1.0 + cov.abs().max()) {
            return Err(Error::Singular("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
        let det: f64 = chol.l_dirty().diagonal().iter().map(|v| v * v).product();
        if !(det > 0.0) {
            return Err(Error::Singular(format!("covariance determinant {det:e}")));
        }
        let norm = 1.0 / ((2.0 * PI).powf(d as f64 / 2.0) * det.sqrt());
        Ok(Self { chol, norm })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `x^T cov^{-1} x`.
    pub fn mahalanobis2(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        let w = self.chol.solve(&v);
        v.dot(&w)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.norm * (-0.5 * self.mahalanobis2(x)).exp()
    }
}

fn check_dim(x: &[f64], m: &DMatrix<f64>) -> Result<()> {
    if x.len() != m.nrows() {
        return Err(Error::Config(format!("point has dimension {}, covariance {}", x.len(), m.nrows())));
    }
    Ok(())
}

/// Walk limit density `m(x) = exp(-x^T M^-1 x / 2) / ((2 pi)^(d/2) sqrt(det M))`.
pub fn gaussian_density_walk(x: &[f64], m: &DMatrix<f64>) -> Result<f64> {
    check_dim(x, m)?;
    Ok(Gaussian::new(m)?.density(x))
}

/// Centre-of-mass limit density
/// `n(x) = exp(-(3/2) x^T M^-1 x) / ((2 pi)^(d/2) sqrt(det(M/3)))`, the
/// Gaussian with covariance `M/3`.
pub fn gaussian_density_com(x: &[f64], m: &DMatrix<f64>) -> Result<f64> {
    check_dim(x, m)?;
    Ok(Gaussian::new(&(m / 3.0))?.density(x))
}
