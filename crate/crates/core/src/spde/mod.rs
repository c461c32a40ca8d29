//! Explicit Euler–Maruyama solver for the distribution-function system
//!
//! ```text
//! ∂u₁/∂t = ½Δu₁ + b₁u₁ − ξ(y, μ¹, μ²) + √γ₁ ∫₀^{u₁(y)} W¹(dt, da)
//! ∂u₂/∂t = ½Δu₂ + b₂u₂ + χ̇(y) ξ(+∞, μ¹, μ²) + √γ₂ ∫₀^{u₂(y)} W²(dt, da)
//! ```
//!
//! on a bounded window with `u(x_min) = 0` and a reflecting right end. After
//! every step values are clamped at 0 and projected onto nondecreasing
//! sequences.

mod engine;
mod isotonic;
mod noise;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{Grid, MeasureError};
use crate::particle::ParamError;

pub use engine::{initial_cdf, SpdeEngine, SpdeState, SpdeStepReport};
pub use isotonic::{isotonic_project, negative_increment_mass};
pub use noise::{cell_counts, cell_membership, linear_functional_variance_rate, nested_noise, CellRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpdeError {
    #[error("time step {dt} exceeds the explicit stability bound dx^2/2 = {bound}")]
    StabilityViolation { dt: f64, bound: f64 },
    #[error("height spacing da = {da} exceeds 0.05 * a_max = {bound}")]
    CoarseHeightGrid { da: f64, bound: f64 },
    #[error("a_max = {a_max} is below 4x the initial right-end value {right_end}")]
    WindowTooSmall { a_max: f64, right_end: f64 },
    #[error("colony {colony} reached height {value} above a_max = {a_max} at step {step}")]
    HeightOverflow {
        colony: usize,
        value: f64,
        a_max: f64,
        step: usize,
    },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Discretization of the spatial window, time and the height axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub grid: Grid,
    pub dt: f64,
    pub da: f64,
    pub a_max: f64,
    #[serde(default)]
    pub cell_rule: CellRule,
}

impl SchemeSpec {
    pub fn height_cells(&self) -> usize {
        (self.a_max / self.da).ceil() as usize
    }

    /// Stability and height-grid rules, independent of initial data.
    pub fn check(&self) -> Result<(), SpdeError> {
        self.grid.validate()?;
        let bound = self.grid.dx().powi(2) / 2.0;
        if !(self.dt > 0.0) || self.dt > bound * (1.0 + 1e-12) {
            return Err(SpdeError::StabilityViolation { dt: self.dt, bound });
        }
        let bound = 0.05 * self.a_max;
        if !(self.da > 0.0) || self.da > bound * (1.0 + 1e-12) {
            return Err(SpdeError::CoarseHeightGrid { da: self.da, bound });
        }
        Ok(())
    }
}
