use serde::{Deserialize, Serialize};

use super::ParamError;

/// Offspring law on `{0, 1, 2}` with prescribed mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    q0: f64,
    q1: f64,
    q2: f64,
}

impl OffspringLaw {
    /// Solves `q1 + 2 q2 = mean`, `q1 + 4 q2 − mean² = variance`.
    ///
    /// A solution with all probabilities in `[0, 1]` exists iff
    /// `max(m(1 − m), (m − 1)(2 − m)) ≤ σ² ≤ m(2 − m)`.
    pub fn new(mean: f64, variance: f64) -> Result<Self, ParamError> {
        if !(mean.is_finite() && variance.is_finite()) {
            return Err(ParamError::InfeasibleOffspring { mean, variance });
        }
        let m2 = mean * mean;
        let q2 = (variance + m2 - mean) / 2.0;
        let q0 = (variance + m2 - 3.0 * mean + 2.0) / 2.0;
        let q1 = 2.0 * mean - m2 - variance;
        let tol = 1e-12;
        if [q0, q1, q2].iter().any(|&q| q < -tol || q > 1.0 + tol) {
            return Err(ParamError::InfeasibleOffspring { mean, variance });
        }
        Ok(Self {
            q0: q0.clamp(0.0, 1.0),
            q1: q1.clamp(0.0, 1.0),
            q2: q2.clamp(0.0, 1.0),
        })
    }

    pub fn probabilities(&self) -> [f64; 3] {
        [self.q0, self.q1, self.q2]
    }

    pub fn mean(&self) -> f64 {
        self.q1 + 2.0 * self.q2
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.q1 + 4.0 * self.q2 - m * m
    }

    /// Inverse-CDF draw from a uniform `u ∈ [0, 1)`.
    #[inline]
    pub fn sample(&self, u: f64) -> u32 {
        if u < self.q0 {
            0
        } else if u < self.q0 + self.q1 {
            1
        } else {
            2
        }
    }
}
