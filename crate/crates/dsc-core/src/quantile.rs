//! Empirical quantile functions via order statistics.
//!
//! Evaluation follows the rule k = ceil(q * n): the k-th order statistic
//! (1-based) is returned, which resolves the boundary points q = k/n to
//! index k and matches the left-continuous generalized inverse.

use crate::dist::UniformDrawSequence;
use crate::error::{DscError, Result};

/// Sorted sample representing an empirical quantile function.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalQuantileFn {
    sorted: Vec<f64>,
}

impl EmpiricalQuantileFn {
    /// Sort a copy of the sample; the input is untouched.
    pub fn fit(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(DscError::InvalidArgument(
                "cannot fit a quantile function to an empty sample".into(),
            ));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(DscError::InvalidArgument(
                "sample contains a non-finite value".into(),
            ));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Order-statistic evaluation at q in (0, 1).
    pub fn eval(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(DscError::InvalidArgument(format!(
                "quantile level must lie in (0,1), got {q}"
            )));
        }
        Ok(self.eval_unchecked(q))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let k = (q * n as f64).ceil() as usize;
        self.sorted[k.clamp(1, n) - 1]
    }
}

/// Artificial sample: the quantile function evaluated at every draw V_m.
pub fn build_artificial_sample(f: &EmpiricalQuantileFn, draws: &UniformDrawSequence) -> Vec<f64> {
    draws.values().iter().map(|&v| f.eval_unchecked(v)).collect()
}
