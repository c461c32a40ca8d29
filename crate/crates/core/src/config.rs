//! JSON run configuration: parsing, defaults, full-list validation and
//! resolution into ready-to-run engines.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::{BaselineEngine, BaselineParams};
use crate::measures::{read_measure_csv, FiniteMeasure, Grid, TestFunction, TestFunctionSpec};
use crate::migration::MigrationIntensity;
use crate::particle::{ColonyParams, InitialMeasure, ModelParams, ObservableSet, ParticleEngine};
use crate::record::{step_of, RecordPlan, RunOptions};
use crate::spde::{initial_cdf, CellRule, SchemeSpec, SpdeEngine};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Particles,
    Spde,
    Verify,
    Baseline,
}

/// A finite measure given inline or as a `position,weight` CSV path
/// (relative to the config file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSource {
    Atoms { atoms: Vec<(f64, f64)> },
    Csv { csv: PathBuf },
}

impl MeasureSource {
    pub fn load(&self, base: &Path) -> Result<FiniteMeasure, String> {
        match self {
            MeasureSource::Atoms { atoms } => {
                FiniteMeasure::from_atoms(atoms.iter().copied()).map_err(|e| e.to_string())
            }
            MeasureSource::Csv { csv } => {
                let path = base.join(csv);
                let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                read_measure_csv(file).map_err(|e| format!("{}: {e}", path.display()))
            }
        }
    }
}

/// Initial measure of one colony. With `sample = true` the particle
/// engine draws `n` i.i.d. positions from the normalized measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(flatten)]
    pub measure: MeasureSource,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub sample: bool,
}

/// Solver settings. `dt` defaults to `0.4·dx²`, `a_max` to eight times the
/// largest initial mass (at least 1) and `da` to `a_max/400`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub da: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_max: Option<f64>,
    #[serde(default)]
    pub cell_rule: CellRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub n: usize,
    /// Particle time step; `1/n` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Two colonies, or one in baseline mode.
    #[serde(default)]
    pub colonies: Vec<ColonyParams>,
    #[serde(default = "MigrationIntensity::zero")]
    pub eta: MigrationIntensity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<MeasureSource>,
    #[serde(default)]
    pub initial: Vec<InitialSpec>,
    /// Immigration measure of baseline mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<MeasureSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spde: Option<SpdeConfig>,
    /// Same list in both colonies; defaults to `f ≡ 1`.
    #[serde(default = "default_observables")]
    pub observables: Vec<TestFunctionSpec>,
    /// Covariation pairs; `(k, k)` for every observable when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_pairs: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Times at which distribution-function snapshots are stored.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    /// Snapshot grid; the SPDE grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_grid: Option<Grid>,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_powers")]
    pub moment_powers: Vec<f64>,
}

fn default_t_end() -> f64 {
    1.0
}
fn default_replicas() -> usize {
    100
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_observables() -> Vec<TestFunctionSpec> {
    vec![TestFunctionSpec::Constant { value: 1.0 }]
}
fn default_stride() -> usize {
    1
}
fn default_powers() -> Vec<f64> {
    vec![1.0, 2.0]
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn h(&self) -> f64 {
        self.h.unwrap_or(1.0 / self.n.max(1) as f64)
    }
}

/// A validated configuration together with its engines.
#[derive(Debug)]
pub struct Job {
    pub config: RunConfig,
    pub hash: String,
    pub kind: JobKind,
}

#[derive(Debug)]
pub enum JobKind {
    Particles {
        engine: ParticleEngine,
        observables: ObservableSet,
        options: RunOptions,
    },
    Spde {
        engine: SpdeEngine,
        u0: [crate::measures::DistributionFunction; 2],
        observables: ObservableSet,
        options: RunOptions,
    },
    Baseline {
        engine: BaselineEngine,
        observables: Vec<TestFunction>,
        options: RunOptions,
    },
    Verify,
}

/// Reads, validates and resolves a config file.
pub fn parse_config(path: &Path) -> Result<Job, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config = RunConfig::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve(config, base)
}

/// Validates `config` (measure CSVs relative to `base`) and builds its
/// engines, reporting every violation found.
pub fn resolve(config: RunConfig, base: &Path) -> Result<Job, ConfigError> {
    let mut v = Vec::new();
    let hash = config.hash();
    if config.mode == Mode::Verify {
        return Ok(Job {
            config,
            hash,
            kind: JobKind::Verify,
        });
    }
    if config.n == 0 {
        v.push("n must be positive".into());
    }
    if !(config.t_end > 0.0 && config.t_end.is_finite()) {
        v.push(format!("t_end must be positive, got {}", config.t_end));
    }
    if config.replicas == 0 {
        v.push("replicas must be positive".into());
    }
    if config.observables.is_empty() {
        v.push("observables must not be empty".into());
    }
    let expected = if config.mode == Mode::Baseline { 1 } else { 2 };
    if config.colonies.len() != expected {
        v.push(format!(
            "colonies must list {expected} entr{}, got {}",
            if expected == 1 { "y" } else { "ies" },
            config.colonies.len()
        ));
    }
    if config.initial.len() != expected {
        v.push(format!(
            "initial must list {expected} measure(s), got {}",
            config.initial.len()
        ));
    }
    if let Some(pairs) = &config.cross_pairs {
        for &(f, g) in pairs {
            if f >= config.observables.len() || g >= config.observables.len() {
                v.push(format!("cross pair ({f}, {g}) refers to a missing observable"));
            }
        }
    }
    for &t in config.checkpoints.iter().chain(&config.snapshots) {
        if !(0.0..=config.t_end + 1e-12).contains(&t) {
            v.push(format!("time {t} lies outside [0, t_end = {}]", config.t_end));
        }
    }

    let mut load = |name: &str, src: &MeasureSource| match src.load(base) {
        Ok(m) => Some(m),
        Err(e) => {
            v.push(format!("{name}: {e}"));
            None
        }
    };
    let initial: Vec<Option<InitialMeasure>> = config
        .initial
        .iter()
        .enumerate()
        .map(|(i, s)| {
            load(&format!("initial[{i}]"), &s.measure).map(|m| {
                if s.sample {
                    InitialMeasure::Sample(m)
                } else {
                    InitialMeasure::Atoms(m)
                }
            })
        })
        .collect();
    let chi = match &config.chi {
        Some(src) => load("chi", src),
        None => Some(FiniteMeasure::empty()),
    };
    let kappa = config.kappa.as_ref().map(|src| load("kappa", src));
    if !v.is_empty() || initial.iter().any(Option::is_none) || chi.is_none() {
        return Err(ConfigError::Validation(v));
    }
    let initial: Vec<InitialMeasure> = initial.into_iter().flatten().collect();
    let chi = chi.unwrap();
    let observables: Vec<TestFunction> = config.observables.iter().map(TestFunction::from_spec).collect();
    let h = config.h();

    match config.mode {
        Mode::Particles | Mode::Spde => {
            let params = ModelParams {
                n: config.n,
                h,
                colonies: [config.colonies[0], config.colonies[1]],
                eta: config.eta.clone(),
                chi,
                initial: [initial[0].clone(), initial[1].clone()],
            };
            if config.mode == Mode::Particles {
                v.extend(params.violations());
            } else {
                // the SPDE only needs the limit parameters and η
                v.extend(params.eta.violations());
                for (i, c) in params.colonies.iter().enumerate() {
                    if let Err(e) = c.offspring_law(params.n) {
                        v.push(format!("colonies[{i}]: {e}"));
                    }
                }
            }
            let obs_set = ObservableSet {
                colonies: [observables.clone(), observables],
                cross_pairs: config
                    .cross_pairs
                    .clone()
                    .unwrap_or_else(|| (0..config.observables.len()).map(|k| (k, k)).collect()),
            };
            if config.mode == Mode::Particles {
                let dt = h;
                let options = options(&config, dt, config.snapshot_grid, &hash, &mut v);
                if !config.snapshots.is_empty() && config.snapshot_grid.is_none() {
                    v.push("snapshots need a snapshot_grid in particles mode".into());
                }
                if !v.is_empty() {
                    return Err(ConfigError::Validation(v));
                }
                let engine = ParticleEngine::new(params).map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
                return Ok(Job {
                    config,
                    hash,
                    kind: JobKind::Particles {
                        engine,
                        observables: obs_set,
                        options,
                    },
                });
            }
            let Some(sc) = config.spde.clone() else {
                v.push("spde mode needs an spde section".into());
                return Err(ConfigError::Validation(v));
            };
            let grid = Grid {
                x_min: sc.x_min,
                x_max: sc.x_max,
                cells: sc.cells,
            };
            if let Err(e) = grid.validate() {
                v.push(format!("spde: {e}"));
                return Err(ConfigError::Validation(v));
            }
            let max_mass = initial.iter().map(|m| match m {
                InitialMeasure::Sample(_) => 1.0,
                InitialMeasure::Atoms(m) => m.total_mass(),
            });
            let a_max = sc.a_max.unwrap_or_else(|| 8.0 * max_mass.fold(1.0, f64::max));
            let spec = SchemeSpec {
                grid,
                dt: sc.dt.unwrap_or(0.4 * grid.dx().powi(2)),
                da: sc.da.unwrap_or(a_max / 400.0),
                a_max,
                cell_rule: sc.cell_rule,
            };
            if let Err(e) = spec.check() {
                v.push(format!("spde: {e}"));
            }
            let mut u0 = Vec::new();
            for (i, init) in initial.iter().enumerate() {
                match initial_cdf(init, &grid) {
                    Ok(u) => {
                        if 4.0 * u.right_end() > a_max {
                            v.push(format!(
                                "spde: a_max = {a_max} is below 4x the initial mass {} of colony {}",
                                u.right_end(),
                                i + 1
                            ));
                        }
                        u0.push(u);
                    }
                    Err(e) => v.push(format!("initial[{i}]: {e}")),
                }
            }
            for f in &obs_set.colonies[0] {
                let (s0, s1) = f.support();
                if f.has_compact_support() && (s0 < grid.x_min || s1 > grid.x_max) {
                    v.push(format!(
                        "observable {} is not supported inside the spde window",
                        f.label()
                    ));
                }
            }
            let snap = config.snapshot_grid.or(Some(grid));
            let options = options(&config, spec.dt, snap, &hash, &mut v);
            if !v.is_empty() {
                return Err(ConfigError::Validation(v));
            }
            let engine = SpdeEngine::new(&params, spec).map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
            let mut u0 = u0.into_iter();
            Ok(Job {
                config,
                hash,
                kind: JobKind::Spde {
                    engine,
                    u0: [u0.next().unwrap(), u0.next().unwrap()],
                    observables: obs_set,
                    options,
                },
            })
        }
        Mode::Baseline => {
            let Some(Some(kappa)) = kappa else {
                if kappa.is_none() {
                    v.push("baseline mode needs kappa".into());
                }
                return Err(ConfigError::Validation(v));
            };
            let params = BaselineParams {
                n: config.n,
                h,
                colony: config.colonies[0],
                kappa,
                initial: initial[0].clone(),
            };
            v.extend(params.violations());
            let options = options(&config, h, config.snapshot_grid, &hash, &mut v);
            if !v.is_empty() {
                return Err(ConfigError::Validation(v));
            }
            let engine = BaselineEngine::new(params).map_err(|e| ConfigError::Validation(vec![e.to_string()]))?;
            Ok(Job {
                config,
                hash,
                kind: JobKind::Baseline {
                    engine,
                    observables,
                    options,
                },
            })
        }
        Mode::Verify => unreachable!(),
    }
}

/// Checkpoints and snapshots must fall on the engine's time mesh.
fn options(config: &RunConfig, dt: f64, grid: Option<Grid>, hash: &str, v: &mut Vec<String>) -> RunOptions {
    let mut steps = |times: &[f64], what: &str| -> Vec<usize> {
        times
            .iter()
            .map(|&t| {
                let k = step_of(t, dt);
                if (k as f64 * dt - t).abs() > 1e-9 * t.max(1.0) {
                    v.push(format!("{what} time {t} is not a multiple of the time step {dt}"));
                }
                k
            })
            .collect()
    };
    let checkpoints = steps(&config.checkpoints, "checkpoint");
    let snapshots = steps(&config.snapshots, "snapshot");
    RunOptions {
        t_end: config.t_end,
        plan: RecordPlan {
            stride: config.record_stride,
            checkpoints,
            snapshots,
            moment_powers: config.moment_powers.clone(),
        },
        snapshot_grid: grid,
        config_hash: hash.to_string(),
    }
}
