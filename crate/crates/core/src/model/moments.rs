use serde::Serialize;

use super::HalfStripModel;
use crate::error::Result;

/// Exact one-step moments of the horizontal increment at a state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    /// `mu_i(x) = E[X' - x]`
    pub mu: f64,
    /// `sigma_i^2(x) = E[(X' - x)^2]` (second moment, not the variance)
    pub sigma2: f64,
    /// `mu_ij(x) = E[(X' - x) 1{eta' = j}]`
    pub mu_row: Vec<f64>,
    /// `q_ij(x) = P(eta' = j)`
    pub q_row: Vec<f64>,
}

/// Sums over the finite support of the kernel at `(x, i)`.
pub fn empirical_moments(model: &HalfStripModel, x: f64, i: usize) -> Result<Moments> {
    let n = model.num_lines();
    let mut m = Moments {
        mu: 0.0,
        sigma2: 0.0,
        mu_row: vec![0.0; n],
        q_row: vec![0.0; n],
    };
    for j in model.transitions(x, i)? {
        let delta = j.y - x;
        m.mu += j.prob * delta;
        m.sigma2 += j.prob * delta * delta;
        m.mu_row[j.line] += j.prob * delta;
        m.q_row[j.line] += j.prob;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CorrelatedRw, Jump, Kernel};

    #[derive(Debug)]
    struct Frozen;

    impl Kernel for Frozen {
        fn num_lines(&self) -> usize {
            2
        }
        fn jumps_into(&self, x: f64, line: usize, out: &mut Vec<Jump>) -> Result<()> {
            out.clear();
            out.push(Jump { y: x, line, prob: 1.0 });
            Ok(())
        }
    }

    #[test]
    fn crw_without_perturbation() {
        let m = HalfStripModel::new(CorrelatedRw::symmetric(0.6, 0.0).unwrap());
        let mo = empirical_moments(&m, 50.0, 1).unwrap();
        assert!((mo.mu - 0.2).abs() < 1e-15);
        assert!((mo.q_row[1] - 0.6).abs() < 1e-15);
        assert!((mo.sigma2 - 1.0).abs() < 1e-15);
        assert!((mo.q_row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_kernel() {
        let m = HalfStripModel::new(Frozen);
        let mo = empirical_moments(&m, 3.5, 0).unwrap();
        assert_eq!(mo.mu, 0.0);
        assert_eq!(mo.sigma2, 0.0);
        assert_eq!(mo.q_row, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_negative_x() {
        let m = HalfStripModel::new(Frozen);
        assert!(matches!(
            empirical_moments(&m, -1.0, 0),
            Err(crate::error::Error::Domain { .. })
        ));
        assert!(empirical_moments(&m, 1.0, 7).is_err());
    }
}
