//! The branching particle system on the time mesh `h`: Brownian motion,
//! branching with an offspring law on `{0, 1, 2}`, emigration out of
//! colony 1 at rate `η`, and `χ`-distributed immigration into colony 2.

mod engine;
mod offspring;
mod params;
mod run;

use thiserror::Error;

pub(crate) use engine::ColonyKernel;
pub use engine::{empirical, Particle, ParticleEngine, ParticleState, StepReport};
pub use offspring::OffspringLaw;
pub use params::{steps_for, ColonyParams, InitialMeasure, LimitParams, ModelParams, MAX_STEP_PROBABILITY};
pub use run::{run, ObservableSet};
pub(crate) use run::{snapshot_values, square_sum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error(
        "offspring law on {{0,1,2}} with mean {mean} and variance {variance} is infeasible \
         (need max(m(1-m), (m-1)(2-m)) <= sigma^2 <= m(2-m))"
    )]
    InfeasibleOffspring { mean: f64, variance: f64 },
    #[error("bad initial measure: {0}")]
    BadInitialMeasure(String),
    #[error("invalid parameters: {}", .0.join("; "))]
    Invalid(Vec<String>),
}
