use serde::{Deserialize, Serialize};

use super::{OffspringLaw, ParamError};
use crate::measures::FiniteMeasure;
use crate::migration::MigrationIntensity;

/// Largest admissible per-step event probability.
pub const MAX_STEP_PROBABILITY: f64 = 0.2;

/// Finite-n branching parameters of one colony.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColonyParams {
    /// `λ_{n,i}`: branching events per particle per unit time.
    pub branching_rate: f64,
    /// `β_{n,i}`: the offspring mean is `1 + β_{n,i}/n`.
    pub offspring_mean_shift: f64,
    /// `σ²_{n,i}`.
    pub offspring_variance: f64,
}

impl ColonyParams {
    pub fn inert() -> Self {
        Self {
            branching_rate: 0.0,
            offspring_mean_shift: 0.0,
            offspring_variance: 0.0,
        }
    }

    pub fn offspring_mean(&self, n: usize) -> f64 {
        1.0 + self.offspring_mean_shift / n as f64
    }

    pub fn offspring_law(&self, n: usize) -> Result<OffspringLaw, ParamError> {
        OffspringLaw::new(self.offspring_mean(n), self.offspring_variance)
    }

    /// `(λ_i, b_i, γ_i)` obtained from `λ_{n,i}/n → λ_i`.
    pub fn limit(&self, n: usize) -> LimitParams {
        let lambda = self.branching_rate / n as f64;
        LimitParams {
            lambda,
            b: self.offspring_mean_shift * lambda,
            gamma: self.offspring_variance * lambda,
        }
    }
}

/// Limit drift rate `b = βλ` and noise intensity `γ = σ²λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub lambda: f64,
    pub b: f64,
    pub gamma: f64,
}

/// How a colony's `n`-particle initial configuration is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMeasure {
    /// Each atom of weight `k/n` becomes `k` particles at its position.
    Atoms(FiniteMeasure),
    /// `n` i.i.d. positions from the normalized measure, weight `1/n` each.
    Sample(FiniteMeasure),
}

impl InitialMeasure {
    pub fn empty() -> Self {
        InitialMeasure::Atoms(FiniteMeasure::empty())
    }

    pub fn measure(&self) -> &FiniteMeasure {
        match self {
            InitialMeasure::Atoms(m) | InitialMeasure::Sample(m) => m,
        }
    }

    /// Particle multiplicities for the `Atoms` form.
    pub fn multiplicities(&self, n: usize) -> Result<Vec<(f64, usize)>, ParamError> {
        let InitialMeasure::Atoms(mu) = self else {
            return Err(ParamError::BadInitialMeasure(
                "sampled initial measures have no fixed multiplicities".into(),
            ));
        };
        mu.atoms()
            .iter()
            .map(|a| {
                let k = a.weight * n as f64;
                let rounded = k.round();
                if rounded < 1.0 || (k - rounded).abs() > 1e-9 * k.max(1.0) {
                    Err(ParamError::BadInitialMeasure(format!(
                        "atom at {} has weight {}, not a positive multiple of 1/n = 1/{n}",
                        a.position, a.weight
                    )))
                } else {
                    Ok((a.position, rounded as usize))
                }
            })
            .collect()
    }
}

/// Everything the particle system needs besides a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub h: f64,
    pub colonies: [ColonyParams; 2],
    pub eta: MigrationIntensity,
    pub chi: FiniteMeasure,
    pub initial: [InitialMeasure; 2],
}

impl ModelParams {
    pub fn limit(&self, colony: usize) -> LimitParams {
        self.colonies[colony].limit(self.n)
    }

    /// All violated constraints.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push("n must be positive".to_string());
            return out;
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            out.push(format!("h must be positive, got {}", self.h));
        }
        for (i, c) in self.colonies.iter().enumerate() {
            let lh = c.branching_rate * self.h;
            if !(c.branching_rate >= 0.0 && c.branching_rate.is_finite()) {
                out.push(format!(
                    "colonies[{i}].branching_rate must be nonnegative, got {}",
                    c.branching_rate
                ));
            } else if lh > MAX_STEP_PROBABILITY {
                out.push(format!(
                    "colonies[{i}]: branching_rate * h = {lh} violates the rule lambda*h <= {MAX_STEP_PROBABILITY}"
                ));
            }
            if let Err(e) = c.offspring_law(self.n) {
                out.push(format!("colonies[{i}]: {e}"));
            }
        }
        out.extend(self.eta.violations());
        let eh = self.eta.eta_max() * self.h;
        if eh > MAX_STEP_PROBABILITY {
            out.push(format!(
                "eta_max * h = {eh} violates the rule h*eta_max <= {MAX_STEP_PROBABILITY}"
            ));
        }
        for (i, init) in self.initial.iter().enumerate() {
            match init {
                InitialMeasure::Atoms(_) => {
                    if let Err(e) = init.multiplicities(self.n) {
                        out.push(format!("initial[{i}]: {e}"));
                    }
                }
                InitialMeasure::Sample(m) => {
                    if m.is_empty() {
                        out.push(format!("initial[{i}]: cannot sample from an empty measure"));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ParamError::Invalid(v))
        }
    }

    pub fn steps_for(&self, t: f64) -> usize {
        steps_for(t, self.h)
    }
}

/// `⌊T/h⌋`, tolerant of the rounding in `T = k·h`; warns when `T` is not a
/// multiple of `h`.
pub fn steps_for(t: f64, h: f64) -> usize {
    let ratio = t / h;
    let k = (ratio + 1e-9).floor();
    if (ratio - k).abs() > 1e-6 {
        log::warn!("T = {t} is not a multiple of h = {h}; truncating to {} steps", k);
    }
    k.max(0.0) as usize
}
