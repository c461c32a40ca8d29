use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{InitialMeasure, ModelParams, OffspringLaw, ParamError};
use crate::measures::{Atom, FiniteMeasure};
use crate::migration::FrozenIntensity;
use crate::record::EventCounts;
use crate::rng::StreamKey;

const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: f64,
    pub weight: f64,
}

/// Two colonies of weighted particles at time `step · h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub step: usize,
    pub time: f64,
    pub colonies: [Vec<Particle>; 2],
    key: StreamKey,
}

impl ParticleState {
    pub fn key(&self) -> StreamKey {
        self.key
    }

    pub fn mass(&self, colony: usize) -> f64 {
        self.colonies[colony].iter().map(|p| p.weight).sum()
    }

    pub fn count(&self, colony: usize) -> usize {
        self.colonies[colony].len()
    }
}

/// Events of one step and the mass change they imply.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub events: [EventCounts; 2],
    /// Sum over events of their exact weight changes, per colony.
    pub implied_mass_change: [f64; 2],
}

/// Per-colony constants needed to advance particles.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ColonyKernel {
    pub law: OffspringLaw,
    pub branch_probability: f64,
    pub sqrt_h: f64,
}

pub(crate) struct Emigration<'a, 'b> {
    pub eta: &'a FrozenIntensity<'b>,
    pub h: f64,
    pub chi: &'a FiniteMeasure,
    pub immigrant_weight: f64,
    pub immigrants: &'a mut Vec<Particle>,
}

impl ColonyKernel {
    /// Diffuses and branches every particle of `input` into `output`, in
    /// index order; emigrants are diverted when `emigration` is set.
    pub fn advance(
        &self,
        input: &[Particle],
        key: StreamKey,
        output: &mut Vec<Particle>,
        mut emigration: Option<Emigration<'_, '_>>,
    ) -> (EventCounts, f64) {
        let mut events = EventCounts::default();
        let mut delta = 0.0;
        for (k, p) in input.iter().enumerate() {
            let mut s = key.child(k as u64).stream();
            let z: f64 = s.sample(StandardNormal);
            let x = p.position + self.sqrt_h * z;
            let copies = if s.random::<f64>() < self.branch_probability {
                let c = self.law.sample(s.random());
                events.deaths += 1;
                events.births += c as u64;
                delta += (c as f64 - 1.0) * p.weight;
                c
            } else {
                1
            };
            match emigration.as_mut() {
                Some(em) => {
                    // η frozen at the start-of-step position
                    let rate = em.eta.at(p.position) * em.h;
                    for _ in 0..copies {
                        if rate > 0.0 && s.random::<f64>() < rate {
                            events.migrations += 1;
                            delta -= p.weight;
                            if let Some(y) = em.chi.quantile_sample(s.random()) {
                                em.immigrants.push(Particle {
                                    position: y,
                                    weight: em.immigrant_weight,
                                });
                            }
                        } else {
                            output.push(Particle {
                                position: x,
                                weight: p.weight,
                            });
                        }
                    }
                }
                None => {
                    for _ in 0..copies {
                        output.push(Particle {
                            position: x,
                            weight: p.weight,
                        });
                    }
                }
            }
        }
        (events, delta)
    }
}

/// The two-colony particle system for fixed parameters.
#[derive(Debug, Clone)]
pub struct ParticleEngine {
    params: ModelParams,
    kernels: [ColonyKernel; 2],
    immigrant_weight: f64,
}

impl ParticleEngine {
    pub fn new(params: ModelParams) -> Result<Self, ParamError> {
        params.validate()?;
        let sqrt_h = params.h.sqrt();
        let kernel = |i: usize| -> Result<ColonyKernel, ParamError> {
            let c = &params.colonies[i];
            Ok(ColonyKernel {
                law: c.offspring_law(params.n)?,
                branch_probability: c.branching_rate * params.h,
                sqrt_h,
            })
        };
        let kernels = [kernel(0)?, kernel(1)?];
        let immigrant_weight = params.chi.total_mass() / params.n as f64;
        Ok(Self {
            params,
            kernels,
            immigrant_weight,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn immigrant_weight(&self) -> f64 {
        self.immigrant_weight
    }

    /// Initial configuration; `key` identifies the replica.
    pub fn init(&self, key: StreamKey) -> Result<ParticleState, ParamError> {
        let n = self.params.n;
        let w = 1.0 / n as f64;
        let mut colonies: [Vec<Particle>; 2] = [Vec::new(), Vec::new()];
        for (i, init) in self.params.initial.iter().enumerate() {
            colonies[i] = match init {
                InitialMeasure::Atoms(_) => init
                    .multiplicities(n)?
                    .into_iter()
                    .flat_map(|(x, k)| std::iter::repeat_n(Particle { position: x, weight: w }, k))
                    .collect(),
                InitialMeasure::Sample(mu) => {
                    let base = key.child(INIT_STREAM).child(i as u64);
                    (0..n)
                        .map(|k| {
                            let u: f64 = base.child(k as u64).stream().random();
                            let position = mu.quantile_sample(u).ok_or_else(|| {
                                ParamError::BadInitialMeasure("cannot sample from an empty measure".into())
                            })?;
                            Ok(Particle { position, weight: w })
                        })
                        .collect::<Result<_, ParamError>>()?
                }
            };
        }
        Ok(ParticleState {
            step: 0,
            time: 0.0,
            colonies,
            key,
        })
    }

    /// One mesh step: diffuse, branch, then emigrate from colony 1 with
    /// `η` frozen at the start-of-step measures.
    pub fn step(&self, state: &mut ParticleState) -> StepReport {
        let key = state.key.child(state.step as u64);
        let mass2: f64 = state.mass(1);
        let mu1 = self.params.eta.needs_positions().then(|| empirical(state, 0));
        let eta = self.params.eta.freeze_with(mu1.as_ref(), mass2);

        let mut report = StepReport::default();
        let mut immigrants = Vec::new();
        let mut next1 = Vec::with_capacity(state.colonies[0].len() + 8);
        let (e1, d1) = self.kernels[0].advance(
            &state.colonies[0],
            key.child(0),
            &mut next1,
            Some(Emigration {
                eta: &eta,
                h: self.params.h,
                chi: &self.params.chi,
                immigrant_weight: self.immigrant_weight,
                immigrants: &mut immigrants,
            }),
        );
        let mut next2 = Vec::with_capacity(state.colonies[1].len() + immigrants.len() + 8);
        let (e2, d2) = self.kernels[1].advance(&state.colonies[1], key.child(1), &mut next2, None);
        let arrived = immigrants.len() as f64 * self.immigrant_weight;
        next2.append(&mut immigrants);

        report.events = [e1, e2];
        report.implied_mass_change = [d1, d2 + arrived];
        state.colonies = [next1, next2];
        state.step += 1;
        state.time = state.step as f64 * self.params.h;
        report
    }
}

/// Empirical measure of one colony, merged and sorted.
pub fn empirical(state: &ParticleState, colony: usize) -> FiniteMeasure {
    measure_of(&state.colonies[colony])
}

pub(crate) fn measure_of(particles: &[Particle]) -> FiniteMeasure {
    let mut atoms: Vec<Atom> = particles
        .iter()
        .filter(|p| p.weight > 0.0)
        .map(|p| Atom {
            position: p.position,
            weight: p.weight,
        })
        .collect();
    atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
    FiniteMeasure::from_sorted_unchecked(atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::migration::MigrationIntensity;
    use crate::particle::ColonyParams;

    fn params(n: usize, lambda: f64, c: f64) -> ModelParams {
        ModelParams {
            n,
            h: 0.01,
            colonies: [ColonyParams {
                branching_rate: lambda,
                offspring_mean_shift: 0.0,
                offspring_variance: 1.0,
            }; 2],
            eta: MigrationIntensity::Constant { c, eta_max: None },
            chi: FiniteMeasure::from_atoms([(-0.5, 0.5), (0.5, 0.5)]).unwrap(),
            initial: [
                InitialMeasure::Atoms(FiniteMeasure::dirac(0.0, 1.0).unwrap()),
                InitialMeasure::empty(),
            ],
        }
    }

    #[test]
    fn init_examples() {
        let mut p = params(1, 0.0, 0.0);
        let e = ParticleEngine::new(p.clone()).unwrap();
        let s = e.init(StreamKey::root(0)).unwrap();
        assert_eq!(
            s.colonies[0],
            vec![Particle {
                position: 0.0,
                weight: 1.0
            }]
        );
        assert_eq!(empirical(&s, 0), FiniteMeasure::dirac(0.0, 1.0).unwrap());

        p.n = 4;
        p.initial[0] = InitialMeasure::Atoms(
            FiniteMeasure::from_atoms([(0.0, 0.25), (1.0, 0.25), (2.0, 0.25), (3.0, 0.25)]).unwrap(),
        );
        let s = ParticleEngine::new(p).unwrap().init(StreamKey::root(0)).unwrap();
        assert_eq!(s.count(0), 4);
        assert!(s.colonies[0].iter().all(|q| q.weight == 0.25));
        assert_eq!(empirical(&s, 0).len(), 4);
        assert!(empirical(&s, 1).is_empty());
    }

    #[test]
    fn sampled_initial_measure_converges() {
        let mut p = params(10_000, 0.0, 0.0);
        let target = FiniteMeasure::from_atoms([(-1.0, 1.0), (0.5, 2.0), (2.0, 1.0)]).unwrap();
        p.initial[0] = InitialMeasure::Sample(target.clone());
        let s = ParticleEngine::new(p).unwrap().init(StreamKey::root(5)).unwrap();
        let normalized = target.scaled(1.0 / target.total_mass()).unwrap();
        let d = crate::measures::rho(&empirical(&s, 0), &normalized);
        assert!(d < 0.05, "rho = {d}");
    }

    #[test]
    fn pure_diffusion_keeps_masses() {
        let e = ParticleEngine::new(params(50, 0.0, 0.0)).unwrap();
        let mut s = e.init(StreamKey::root(3)).unwrap();
        for _ in 0..20 {
            let r = e.step(&mut s);
            assert_eq!(r.events, [EventCounts::default(); 2]);
        }
        assert_eq!(s.count(0), 50);
        assert!((s.mass(0) - 1.0).abs() < 1e-12);
        assert!(s.colonies[0].iter().any(|p| p.position != 0.0));
    }

    #[test]
    fn weight_conservation_per_event() {
        let e = ParticleEngine::new(params(40, 10.0, 5.0)).unwrap();
        let mut s = e.init(StreamKey::root(11)).unwrap();
        let mut saw = [false; 2];
        for _ in 0..200 {
            let before = [s.mass(0), s.mass(1)];
            let r = e.step(&mut s);
            saw[0] |= r.events[0].deaths > 0;
            saw[1] |= r.events[0].migrations > 0;
            for i in 0..2 {
                let tol = 1e-12 * (s.count(i) as f64).max(1.0);
                assert!((s.mass(i) - before[i] - r.implied_mass_change[i]).abs() <= tol);
            }
            assert!(s.colonies[0].iter().all(|p| p.weight == 1.0 / 40.0));
            assert!(s.colonies[1].iter().all(|p| p.weight == 1.0 / 40.0));
        }
        assert!(saw[0] && saw[1]);
    }

    #[test]
    fn critical_branching_one_step_mean() {
        // λh = 0.1: E[Δ mass] = 0 exactly; compare over many single steps
        let mut p = params(20, 10.0, 0.0);
        p.colonies[0].offspring_variance = 1.0;
        let e = ParticleEngine::new(p).unwrap();
        let reps = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for r in 0..reps {
            let mut s = e.init(StreamKey::root(9).child(r)).unwrap();
            e.step(&mut s);
            let d = s.mass(0) - 1.0;
            sum += d;
            sq += d * d;
        }
        let mean = sum / reps as f64;
        let se = ((sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        // per-step variance: 20 particles, each (ξ−1)²/400 w.p. 0.1
        let exact_var = 20.0 * 0.1 * 1.0 / 400.0;
        assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
        assert!((sq / reps as f64 - exact_var).abs() < 0.05 * exact_var);
    }

    #[test]
    fn constant_emigration_one_step_means() {
        let mut p = params(10, 0.0, 2.0);
        p.chi = FiniteMeasure::from_atoms([(0.0, 0.75), (1.0, 0.75)]).unwrap();
        let e = ParticleEngine::new(p).unwrap();
        let reps = 100_000u64;
        let (mut s1, mut q1, mut s2, mut q2) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..reps {
            let mut s = e.init(StreamKey::root(21).child(r)).unwrap();
            e.step(&mut s);
            let d1 = s.mass(0) - 1.0;
            let d2 = s.mass(1);
            s1 += d1;
            q1 += d1 * d1;
            s2 += d2;
            q2 += d2 * d2;
        }
        let r = reps as f64;
        let (m1, m2) = (s1 / r, s2 / r);
        let se1 = ((q1 / r - m1 * m1) / r).sqrt();
        let se2 = ((q2 / r - m2 * m2) / r).sqrt();
        let (c, h) = (2.0, 0.01);
        assert!((m1 + c * h).abs() < 4.0 * se1, "{m1} vs {}", -c * h);
        assert!((m2 - 1.5 * c * h).abs() < 4.0 * se2, "{m2} vs {}", 1.5 * c * h);
    }
}
