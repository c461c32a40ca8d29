//! Parallel replica execution. Replica `i` draws all of its randomness from
//! streams keyed by `(seed, i)`, so results do not depend on the number of
//! workers or on scheduling.

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{Job, JobKind};
use crate::particle::{self, ParamError};
use crate::record::PathRecord;
use crate::spde::SpdeError;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SUPERPROCESS_WORKERS";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("replica {replica}: {source}")]
    Particles { replica: u64, source: ParamError },
    #[error("replica {replica}: {source}")]
    Spde { replica: u64, source: SpdeError },
    #[error("verify jobs have no replicas to run")]
    NotASimulation,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&w| w > 0)
}

/// Runs `f(0..count)` on `workers` threads (rayon's default when `None`),
/// keeping output order.
pub fn par_map<T, E, F>(count: u64, workers: Option<usize>, f: F) -> Result<Vec<T>, RunError>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
    RunError: From<(u64, E)>,
{
    let body = || {
        (0..count)
            .into_par_iter()
            .map(|i| f(i).map_err(|e| RunError::from((i, e))))
            .collect::<Result<Vec<T>, RunError>>()
    };
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?
            .install(body),
        None => body(),
    }
}

impl From<(u64, ParamError)> for RunError {
    fn from((replica, source): (u64, ParamError)) -> Self {
        RunError::Particles { replica, source }
    }
}

impl From<(u64, SpdeError)> for RunError {
    fn from((replica, source): (u64, SpdeError)) -> Self {
        RunError::Spde { replica, source }
    }
}

/// All replicas of a simulation job, in replica order.
pub fn run_job(job: &Job, workers: Option<usize>) -> Result<Vec<PathRecord>, RunError> {
    let count = job.config.replicas as u64;
    let seed = job.config.seed;
    match &job.kind {
        JobKind::Particles {
            engine,
            observables,
            options,
        } => par_map(count, workers, |i| particle::run(engine, observables, options, seed, i)),
        JobKind::Spde {
            engine,
            u0,
            observables,
            options,
        } => par_map(count, workers, |i| {
            engine.run([&u0[0], &u0[1]], observables, options, seed, i)
        }),
        JobKind::Baseline {
            engine,
            observables,
            options,
        } => par_map(count, workers, |i| engine.run(observables, options, seed, i)),
        JobKind::Verify => Err(RunError::NotASimulation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, RunConfig};

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let text = r#"{
            "mode": "particles", "n": 40, "t_end": 0.5, "replicas": 6, "seed": 3,
            "colonies": [
                {"branching_rate": 4.0, "offspring_mean_shift": 0.0, "offspring_variance": 1.0},
                {"branching_rate": 4.0, "offspring_mean_shift": 0.0, "offspring_variance": 1.0}
            ],
            "eta": {"model": "constant", "c": 1.0},
            "chi": {"atoms": [[0.0, 1.0]]},
            "initial": [{"atoms": [[0.0, 1.0]]}, {"atoms": [[0.0, 1.0]]}]
        }"#;
        let job = resolve(RunConfig::from_json(text).unwrap(), std::path::Path::new(".")).unwrap();
        let one = run_job(&job, Some(1)).unwrap();
        let three = run_job(&job, Some(3)).unwrap();
        assert_eq!(one, three);
        assert_eq!(
            one.iter().map(|r| r.meta.replica).collect::<Vec<_>>(),
            (0..6).collect::<Vec<_>>()
        );
        assert!(one.iter().all(|r| r.meta.config_hash == job.hash));
    }
}
