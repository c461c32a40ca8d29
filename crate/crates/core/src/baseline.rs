//! Single colony with a constant immigration measure `κ`: branching
//! Brownian particles plus, every step, a deposit of total mass `⟨κ,1⟩h`
//! split into equal atoms at positions drawn from `κ/⟨κ,1⟩`.
//!
//! The compensator of `⟨μ, f⟩` is `Σ h (½⟨μ_ℓ, f''⟩ + b⟨μ_ℓ, f⟩ + ⟨κ, f⟩)`.

use rand::Rng;

use crate::measures::{integrate, FiniteMeasure, TestFunction};
use crate::migration::MigrationIntensity;
use crate::particle::{
    snapshot_values, square_sum, steps_for, ColonyKernel, ColonyParams, InitialMeasure, ModelParams, ParamError,
    Particle,
};
use crate::record::{
    ColonyInput, ColonyMeta, EngineKind, EventCounts, ObservableInput, PathRecord, RecordMeta, Recorder, RunOptions,
};
use crate::rng::StreamKey;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub n: usize,
    pub h: f64,
    pub colony: ColonyParams,
    pub kappa: FiniteMeasure,
    pub initial: InitialMeasure,
}

impl BaselineParams {
    pub fn violations(&self) -> Vec<String> {
        // the two-colony rules with an inert second colony
        self.as_two_colony().violations()
    }

    fn as_two_colony(&self) -> ModelParams {
        ModelParams {
            n: self.n,
            h: self.h,
            colonies: [self.colony, ColonyParams::inert()],
            eta: MigrationIntensity::zero(),
            chi: FiniteMeasure::empty(),
            initial: [self.initial.clone(), InitialMeasure::empty()],
        }
    }

    /// Atoms per deposit, `max(1, round(⟨κ,1⟩ h n))`.
    pub fn deposit_atoms(&self) -> usize {
        ((self.kappa.total_mass() * self.h * self.n as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct BaselineEngine {
    params: BaselineParams,
    kernel: ColonyKernel,
    deposit_atoms: usize,
    deposit_weight: f64,
}

impl BaselineEngine {
    pub fn new(params: BaselineParams) -> Result<Self, ParamError> {
        let v = params.violations();
        if !v.is_empty() {
            return Err(ParamError::Invalid(v));
        }
        let kernel = ColonyKernel {
            law: params.colony.offspring_law(params.n)?,
            branch_probability: params.colony.branching_rate * params.h,
            sqrt_h: params.h.sqrt(),
        };
        let deposit_atoms = params.deposit_atoms();
        let deposit_weight = params.kappa.total_mass() * params.h / deposit_atoms as f64;
        Ok(Self {
            params,
            kernel,
            deposit_atoms,
            deposit_weight,
        })
    }

    pub fn params(&self) -> &BaselineParams {
        &self.params
    }

    fn initial(&self, key: StreamKey) -> Result<Vec<Particle>, ParamError> {
        let two = crate::particle::ParticleEngine::new(self.params.as_two_colony())?;
        Ok(two.init(key)?.colonies[0].clone())
    }

    /// One step; returns the events.
    pub fn step(&self, particles: &mut Vec<Particle>, key: StreamKey) -> EventCounts {
        let mut next = Vec::with_capacity(particles.len() + self.deposit_atoms);
        let (mut events, _) = self.kernel.advance(particles, key.child(0), &mut next, None);
        if self.deposit_weight > 0.0 {
            let mut s = key.child(1).stream();
            for _ in 0..self.deposit_atoms {
                if let Some(y) = self.params.kappa.quantile_sample(s.random()) {
                    next.push(Particle {
                        position: y,
                        weight: self.deposit_weight,
                    });
                    events.migrations += 1;
                }
            }
        }
        *particles = next;
        events
    }

    pub fn run(
        &self,
        observables: &[TestFunction],
        options: &RunOptions,
        seed: u64,
        replica: u64,
    ) -> Result<PathRecord, ParamError> {
        let p = &self.params;
        let steps = steps_for(options.t_end, p.h);
        let limit = p.colony.limit(p.n);
        let meta = RecordMeta {
            engine: EngineKind::Baseline,
            replica,
            seed,
            n: Some(p.n),
            dt: p.h,
            steps,
            config_hash: options.config_hash.clone(),
            colonies: vec![ColonyMeta {
                labels: observables.iter().map(|f| f.label().to_string()).collect(),
                b: limit.b,
                gamma: limit.gamma,
                coupling_sign: 1.0,
            }],
            cross_pairs: Vec::new(),
            snapshot_grid: options.snapshot_grid,
        };
        let kappa_mass = p.kappa.total_mass();
        let kappa_f: Vec<f64> = observables.iter().map(|f| integrate(&p.kappa, f)).collect();
        // variance rate of one deposit: k w² Var_κ̄(f) / h
        let deposit_var: Vec<f64> = observables
            .iter()
            .zip(&kappa_f)
            .map(|(f, &kf)| {
                if kappa_mass <= 0.0 {
                    return 0.0;
                }
                let kf2: f64 = p
                    .kappa
                    .atoms()
                    .iter()
                    .map(|a| a.weight * f.value(a.position).powi(2))
                    .sum();
                let mean = kf / kappa_mass;
                let var = (kf2 / kappa_mass - mean * mean).max(0.0);
                self.deposit_atoms as f64 * self.deposit_weight.powi(2) * var / p.h
            })
            .collect();
        let branching_var = p.colony.offspring_variance * p.colony.branching_rate;

        let root = StreamKey::root(seed).child(replica);
        let mut particles = self.initial(root)?;
        let mut recorder = Recorder::new(meta, options.plan.clone());
        let mut events = EventCounts::default();
        for k in 0..=steps {
            let inputs = observables
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let s = square_sum(&particles, f, branching_var);
                    ObservableInput {
                        value: s[0],
                        second: s[1],
                        coupling: kappa_f[i],
                        square: s[2],
                        qv_rate: s[3] + deposit_var[i],
                        pairing: None,
                    }
                })
                .collect();
            let colony = ColonyInput {
                mass: particles.iter().map(|q| q.weight).sum(),
                particles: Some(particles.len() as u64),
                observables: inputs,
            };
            recorder.observe(k, vec![colony], Vec::new());
            if let Some(grid) = options.snapshot_grid.as_ref().filter(|_| recorder.wants_snapshot(k)) {
                recorder.push_snapshot(k, 0, snapshot_values(&particles, grid));
            }
            if k < steps {
                events.add(&self.step(&mut particles, root.child(k as u64)));
            }
        }
        Ok(recorder.finish(vec![events], None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kappa: FiniteMeasure, lambda: f64) -> BaselineParams {
        BaselineParams {
            n: 100,
            h: 0.01,
            colony: ColonyParams {
                branching_rate: lambda,
                offspring_mean_shift: 0.0,
                offspring_variance: 1.0,
            },
            kappa,
            initial: InitialMeasure::Atoms(FiniteMeasure::dirac(0.0, 1.0).unwrap()),
        }
    }

    #[test]
    fn deposits_add_exact_mass() {
        let kappa = FiniteMeasure::from_atoms([(-1.0, 0.5), (1.0, 1.5)]).unwrap();
        let e = BaselineEngine::new(params(kappa, 0.0)).unwrap();
        assert_eq!(e.params().deposit_atoms(), 2);
        let rec = e
            .run(&[TestFunction::constant(1.0)], &RunOptions::new(1.0), 3, 0)
            .unwrap();
        let last = rec.rows.last().unwrap();
        assert!((last.colonies[0].mass - 3.0).abs() < 1e-12);
        // deterministic mass, so the residual of f = 1 vanishes
        assert!(last.colonies[0].observables[0].residual.abs() < 1e-12);
    }

    #[test]
    fn zero_kappa_has_no_deposits() {
        let e = BaselineEngine::new(params(FiniteMeasure::empty(), 10.0)).unwrap();
        let rec = e
            .run(&[TestFunction::constant(1.0)], &RunOptions::new(0.5), 3, 0)
            .unwrap();
        assert_eq!(rec.summary.events[0].migrations, 0);
        assert!(rec.summary.events[0].deaths > 0);
    }
}
