use super::engine::{measure_of, Particle};
use super::{steps_for, ParamError, ParticleEngine, ParticleState};
use crate::measures::{integrate, Grid, TestFunction};
use crate::record::{
    ColonyInput, ColonyMeta, EngineKind, EventCounts, ObservableInput, PathRecord, RecordMeta, Recorder, RunOptions,
};
use crate::rng::StreamKey;

/// Observables of each colony plus the `(f, g)` pairs whose covariation
/// is tracked.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    pub colonies: [Vec<TestFunction>; 2],
    pub cross_pairs: Vec<(usize, usize)>,
}

impl ObservableSet {
    /// Same list in both colonies, pairs `(k, k)`.
    pub fn mirrored(fs: Vec<TestFunction>) -> Self {
        let cross_pairs = (0..fs.len()).map(|k| (k, k)).collect();
        Self {
            colonies: [fs.clone(), fs],
            cross_pairs,
        }
    }

    pub fn mass_only() -> Self {
        Self::mirrored(vec![TestFunction::constant(1.0)])
    }

    pub fn labels(&self, colony: usize) -> Vec<String> {
        self.colonies[colony].iter().map(|f| f.label().to_string()).collect()
    }
}

struct Moments {
    chi_mass: f64,
    chi_g: Vec<f64>,
    chi_g2: Vec<f64>,
    /// `σ²λ_n` per colony.
    branching_var: [f64; 2],
    n: f64,
}

#[inline]
pub(crate) fn square_sum(particles: &[Particle], f: &TestFunction, branching_var: f64) -> [f64; 4] {
    // ⟨μ,f⟩, ⟨μ,f''⟩, ⟨μ,f²⟩ and the diffusion + branching QV rate
    let mut acc = [0.0; 4];
    for p in particles {
        let v = f.value(p.position);
        let d = f.first(p.position);
        let w2 = p.weight * p.weight;
        acc[0] += p.weight * v;
        acc[1] += p.weight * f.second(p.position);
        acc[2] += p.weight * v * v;
        acc[3] += w2 * (d * d + branching_var * v * v);
    }
    acc
}

fn inputs(
    engine: &ParticleEngine,
    state: &ParticleState,
    obs: &ObservableSet,
    m: &Moments,
) -> (Vec<ColonyInput>, Vec<f64>) {
    let params = engine.params();
    let c1 = &state.colonies[0];
    let mu1 = params.eta.needs_positions().then(|| measure_of(c1));
    let eta = params.eta.freeze_with(mu1.as_ref(), state.mass(1));
    let etas: Vec<f64> = match eta.uniform_value() {
        Some(v) => vec![v; c1.len()],
        None => c1.iter().map(|p| eta.at(p.position)).collect(),
    };
    let eta_count: f64 = etas.iter().sum();
    let eta_mass: f64 = c1.iter().zip(&etas).map(|(p, e)| p.weight * e).sum();

    let mut f_eta = Vec::with_capacity(obs.colonies[0].len());
    let first: Vec<ObservableInput> = obs.colonies[0]
        .iter()
        .map(|f| {
            let base = square_sum(c1, f, m.branching_var[0]);
            let mut coupling = 0.0;
            let mut migration_qv = 0.0;
            for (p, e) in c1.iter().zip(&etas) {
                let v = f.value(p.position);
                coupling += p.weight * v * e;
                migration_qv += p.weight * p.weight * v * v * e;
            }
            f_eta.push(coupling);
            ObservableInput {
                value: base[0],
                second: base[1],
                coupling,
                square: base[2],
                qv_rate: base[3] + migration_qv,
                pairing: None,
            }
        })
        .collect();

    let w_imm = engine.immigrant_weight();
    let second: Vec<ObservableInput> = obs.colonies[1]
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let base = square_sum(&state.colonies[1], g, m.branching_var[1]);
            let immigration_qv = if m.chi_mass > 0.0 {
                eta_count * w_imm * w_imm * m.chi_g2[k] / m.chi_mass
            } else {
                0.0
            };
            ObservableInput {
                value: base[0],
                second: base[1],
                coupling: m.chi_g[k] * eta_mass,
                square: base[2],
                qv_rate: base[3] + immigration_qv,
                pairing: None,
            }
        })
        .collect();

    let cross = obs
        .cross_pairs
        .iter()
        .map(|&(f, g)| m.chi_g[g] * f_eta[f] / m.n)
        .collect();
    let colonies = vec![
        ColonyInput {
            mass: state.mass(0),
            particles: Some(state.count(0) as u64),
            observables: first,
        },
        ColonyInput {
            mass: state.mass(1),
            particles: Some(state.count(1) as u64),
            observables: second,
        },
    ];
    (colonies, cross)
}

/// `μ((−∞, x_j])` at every node; mass outside the window is not an error.
pub(crate) fn snapshot_values(particles: &[Particle], grid: &Grid) -> Vec<f64> {
    let mu = measure_of(particles);
    (0..grid.nodes_len()).map(|j| mu.mass_up_to(grid.node(j))).collect()
}

/// Runs one replica for `⌊T/h⌋` steps and records its path.
pub fn run(
    engine: &ParticleEngine,
    observables: &ObservableSet,
    options: &RunOptions,
    seed: u64,
    replica: u64,
) -> Result<PathRecord, ParamError> {
    let params = engine.params();
    let steps = steps_for(options.t_end, params.h);
    let limits = [params.limit(0), params.limit(1)];
    let meta = RecordMeta {
        engine: EngineKind::Particles,
        replica,
        seed,
        n: Some(params.n),
        dt: params.h,
        steps,
        config_hash: options.config_hash.clone(),
        colonies: (0..2)
            .map(|i| ColonyMeta {
                labels: observables.labels(i),
                b: limits[i].b,
                gamma: limits[i].gamma,
                coupling_sign: if i == 0 { -1.0 } else { 1.0 },
            })
            .collect(),
        cross_pairs: observables.cross_pairs.clone(),
        snapshot_grid: options.snapshot_grid,
    };
    let moments = Moments {
        chi_mass: params.chi.total_mass(),
        chi_g: observables.colonies[1]
            .iter()
            .map(|g| integrate(&params.chi, g))
            .collect(),
        chi_g2: observables.colonies[1]
            .iter()
            .map(|g| {
                params
                    .chi
                    .atoms()
                    .iter()
                    .map(|a| a.weight * g.value(a.position).powi(2))
                    .sum()
            })
            .collect(),
        branching_var: [0, 1].map(|i| params.colonies[i].offspring_variance * params.colonies[i].branching_rate),
        n: params.n as f64,
    };

    let mut recorder = Recorder::new(meta, options.plan.clone());
    let mut state = engine.init(StreamKey::root(seed).child(replica))?;
    let mut events = [EventCounts::default(); 2];
    for k in 0..=steps {
        let (colonies, cross) = inputs(engine, &state, observables, &moments);
        recorder.observe(k, colonies, cross);
        if let Some(grid) = options.snapshot_grid.as_ref().filter(|_| recorder.wants_snapshot(k)) {
            for i in 0..2 {
                recorder.push_snapshot(k, i, snapshot_values(&state.colonies[i], grid));
            }
        }
        if k < steps {
            let report = engine.step(&mut state);
            for (tot, e) in events.iter_mut().zip(&report.events) {
                tot.add(e);
            }
        }
    }
    Ok(recorder.finish(events.to_vec(), None))
}
