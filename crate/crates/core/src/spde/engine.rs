use super::isotonic::{isotonic_project, negative_increment_mass};
use super::noise::{cell_counts, linear_functional_variance_rate, nested_noise};
use super::{SchemeSpec, SpdeError};
use crate::measures::{
    cell_averaged_cdf, integrate, pair_l1, DistributionFunction, FiniteMeasure, MeasureError, TestFunction,
};
use crate::migration::{xi_profile, ImmigrationTarget, MigrationIntensity};
use crate::particle::{steps_for, InitialMeasure, ModelParams, ObservableSet};
use crate::record::{
    ColonyInput, ColonyMeta, EngineKind, EventCounts, ObservableInput, PathRecord, RecordMeta, Recorder, RunOptions,
};
use crate::rng::StreamKey;

/// Distribution function of an initial measure; sampled measures are
/// normalized to mass 1 like their particle counterpart.
pub fn initial_cdf(init: &InitialMeasure, grid: &crate::measures::Grid) -> Result<DistributionFunction, MeasureError> {
    match init {
        InitialMeasure::Atoms(mu) => cell_averaged_cdf(mu, grid),
        InitialMeasure::Sample(mu) => {
            let m = mu.total_mass();
            cell_averaged_cdf(&mu.scaled(if m > 0.0 { 1.0 / m } else { 0.0 })?, grid)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdeState {
    pub step: usize,
    pub time: f64,
    u: [Vec<f64>; 2],
    key: StreamKey,
}

impl SpdeState {
    pub fn values(&self, colony: usize) -> &[f64] {
        &self.u[colony]
    }

    pub fn right_end(&self, colony: usize) -> f64 {
        *self.u[colony].last().unwrap()
    }
}

/// Per-colony diagnostics of the clamp and projection of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpdeStepReport {
    /// `Σ max(−v_j, 0)` removed by the clamp at 0.
    pub clamped_mass: [f64; 2],
    /// Downward-jump mass of the clamped profile before projection.
    pub negative_increment_mass: [f64; 2],
    /// `|u_J after projection − u_J before projection|`.
    pub right_end_shift: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SpdeEngine {
    spec: SchemeSpec,
    b: [f64; 2],
    gamma: [f64; 2],
    eta: MigrationIntensity,
    chi: ImmigrationTarget,
    nodes: Vec<f64>,
}

impl SpdeEngine {
    /// Uses the limit parameters `b_i`, `γ_i` of `params`.
    pub fn new(params: &ModelParams, spec: SchemeSpec) -> Result<Self, SpdeError> {
        spec.check()?;
        let chi = ImmigrationTarget::new(params.chi.clone(), &spec.grid)?;
        let l = [params.limit(0), params.limit(1)];
        Ok(Self {
            spec,
            b: [l[0].b, l[1].b],
            gamma: [l[0].gamma, l[1].gamma],
            eta: params.eta.clone(),
            chi,
            nodes: spec.grid.nodes(),
        })
    }

    pub fn spec(&self) -> &SchemeSpec {
        &self.spec
    }

    pub fn gamma(&self, colony: usize) -> f64 {
        self.gamma[colony]
    }

    pub fn b(&self, colony: usize) -> f64 {
        self.b[colony]
    }

    pub fn init(&self, u0: [&DistributionFunction; 2], key: StreamKey) -> Result<SpdeState, SpdeError> {
        for u in u0 {
            if u.grid() != &self.spec.grid {
                return Err(MeasureError::GridMismatch.into());
            }
            if 4.0 * u.right_end() > self.spec.a_max {
                return Err(SpdeError::WindowTooSmall {
                    a_max: self.spec.a_max,
                    right_end: u.right_end(),
                });
            }
        }
        let pin = |u: &DistributionFunction| {
            let mut v = u.values().to_vec();
            // left boundary is pinned; mass at x_min is not representable
            v[0] = 0.0;
            v
        };
        Ok(SpdeState {
            step: 0,
            time: 0.0,
            u: [pin(u0[0]), pin(u0[1])],
            key,
        })
    }

    pub fn distribution(&self, state: &SpdeState, colony: usize) -> DistributionFunction {
        DistributionFunction::from_parts_unchecked(self.spec.grid, state.u[colony].clone())
    }

    pub fn to_measure(&self, state: &SpdeState, colony: usize) -> FiniteMeasure {
        self.distribution(state, colony).to_measure()
    }

    pub fn step(&self, state: &mut SpdeState) -> Result<SpdeStepReport, SpdeError> {
        let spec = &self.spec;
        let dt = spec.dt;
        let inv_dx2 = 1.0 / spec.grid.dx().powi(2);
        let mu1 = self.to_measure(state, 0);
        let mu2 = self.to_measure(state, 1);
        let xi = xi_profile(&self.nodes, &mu1, &mu2, &self.eta);
        let xi_total = *xi.last().unwrap();
        let chi_dot = self.chi.chi_cdf().values();
        let cells = spec.height_cells();
        let key = state.key.child(state.step as u64);

        let mut report = SpdeStepReport::default();
        let mut next: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for i in 0..2 {
            let u = &state.u[i];
            let last = u.len() - 1;
            let mut counts = cell_counts(u, spec.da, spec.cell_rule, cells);
            counts[0] = (0, 0.0);
            let noise = nested_noise(&counts, self.gamma[i], dt, spec.da, &mut key.child(i as u64).stream());
            let mut v = vec![0.0; u.len()];
            let mut clamped = 0.0;
            for j in 1..=last {
                let lap = if j < last {
                    (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv_dx2
                } else {
                    // mirror node u_{J+1} = u_{J−1}
                    2.0 * (u[j - 1] - u[j]) * inv_dx2
                };
                let migration = if i == 0 { -xi[j] } else { chi_dot[j] * xi_total };
                let x = u[j] + dt * (0.5 * lap + self.b[i] * u[j] + migration) + noise[j];
                if x < 0.0 {
                    clamped -= x;
                    v[j] = 0.0;
                } else {
                    v[j] = x;
                }
            }
            let negative = negative_increment_mass(&v);
            let before = v[last];
            if negative > 0.0 {
                isotonic_project(&mut v);
            }
            report.clamped_mass[i] = clamped;
            report.negative_increment_mass[i] = negative;
            report.right_end_shift[i] = (v[last] - before).abs();
            if let Some(&top) = v.iter().find(|&&x| x > spec.a_max) {
                return Err(SpdeError::HeightOverflow {
                    colony: i,
                    value: top,
                    a_max: spec.a_max,
                    step: state.step + 1,
                });
            }
            next[i] = v;
        }
        state.u = next;
        state.step += 1;
        state.time = state.step as f64 * dt;
        Ok(report)
    }

    fn inputs(&self, state: &SpdeState, obs: &ObservableSet, chi_g: &[f64]) -> (Vec<ColonyInput>, Vec<f64>) {
        let mu = [self.to_measure(state, 0), self.to_measure(state, 1)];
        let eta = self.eta.freeze(&mu[0], &mu[1]);
        let eta_mass: f64 = mu[0].atoms().iter().map(|a| a.weight * eta.at(a.position)).sum();
        let cells = self.spec.height_cells();
        let colonies = (0..2)
            .map(|i| {
                let u = &state.u[i];
                let mut counts = cell_counts(u, self.spec.da, self.spec.cell_rule, cells);
                counts[0] = (0, 0.0);
                let dist = self.distribution(state, i);
                let observables = obs.colonies[i]
                    .iter()
                    .enumerate()
                    .map(|(k, f)| {
                        let fv: Vec<f64> = self.nodes.iter().map(|&x| f.value(x)).collect();
                        let d: Vec<f64> = (0..fv.len())
                            .map(|j| fv[j] - fv.get(j + 1).copied().unwrap_or(0.0))
                            .collect();
                        let coupling = if i == 0 {
                            mu[0]
                                .atoms()
                                .iter()
                                .map(|a| a.weight * f.value(a.position) * eta.at(a.position))
                                .sum()
                        } else {
                            chi_g[k] * eta_mass
                        };
                        ObservableInput {
                            value: integrate(&mu[i], f),
                            second: mu[i].atoms().iter().map(|a| a.weight * f.second(a.position)).sum(),
                            coupling,
                            square: mu[i]
                                .atoms()
                                .iter()
                                .map(|a| a.weight * f.value(a.position).powi(2))
                                .sum(),
                            qv_rate: linear_functional_variance_rate(&counts, &d, self.gamma[i], self.spec.da),
                            pairing: pair_l1(&dist, f).ok(),
                        }
                    })
                    .collect();
                ColonyInput {
                    mass: state.right_end(i),
                    particles: None,
                    observables,
                }
            })
            .collect();
        // the two noises are independent
        (colonies, vec![0.0; obs.cross_pairs.len()])
    }

    fn snapshot(&self, state: &SpdeState, colony: usize, grid: &crate::measures::Grid) -> Vec<f64> {
        if grid == &self.spec.grid {
            state.u[colony].clone()
        } else {
            let d = self.distribution(state, colony);
            grid.nodes().into_iter().map(|x| d.evaluate(x)).collect()
        }
    }

    pub fn run(
        &self,
        u0: [&DistributionFunction; 2],
        observables: &ObservableSet,
        options: &RunOptions,
        seed: u64,
        replica: u64,
    ) -> Result<PathRecord, SpdeError> {
        let steps = steps_for(options.t_end, self.spec.dt);
        let meta = RecordMeta {
            engine: EngineKind::Spde,
            replica,
            seed,
            n: None,
            dt: self.spec.dt,
            steps,
            config_hash: options.config_hash.clone(),
            colonies: (0..2)
                .map(|i| ColonyMeta {
                    labels: observables.labels(i),
                    b: self.b[i],
                    gamma: self.gamma[i],
                    coupling_sign: if i == 0 { -1.0 } else { 1.0 },
                })
                .collect(),
            cross_pairs: observables.cross_pairs.clone(),
            snapshot_grid: options.snapshot_grid,
        };
        let chi_g: Vec<f64> = observables.colonies[1]
            .iter()
            .map(|g: &TestFunction| integrate(self.chi.chi(), g))
            .collect();
        let mut recorder = Recorder::new(meta, options.plan.clone());
        let mut state = self.init(u0, StreamKey::root(seed).child(replica))?;
        let mut projected = 0.0;
        for k in 0..=steps {
            let (colonies, cross) = self.inputs(&state, observables, &chi_g);
            recorder.observe(k, colonies, cross);
            if let Some(grid) = options.snapshot_grid.as_ref().filter(|_| recorder.wants_snapshot(k)) {
                for i in 0..2 {
                    recorder.push_snapshot(k, i, self.snapshot(&state, i, grid));
                }
            }
            if k < steps {
                let r = self.step(&mut state)?;
                projected += r.negative_increment_mass.iter().sum::<f64>() + r.clamped_mass.iter().sum::<f64>();
            }
        }
        Ok(recorder.finish(vec![EventCounts::default(); 2], Some(projected)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{cdf, Grid};
    use crate::particle::ColonyParams;
    use crate::spde::CellRule;

    fn params(lambda_n: f64, beta: f64, sigma2: f64, c: f64) -> ModelParams {
        ModelParams {
            n: 100,
            h: 0.01,
            colonies: [ColonyParams {
                branching_rate: lambda_n,
                offspring_mean_shift: beta,
                offspring_variance: sigma2,
            }; 2],
            eta: MigrationIntensity::Constant { c, eta_max: None },
            chi: FiniteMeasure::dirac(0.5, 1.0).unwrap(),
            initial: [InitialMeasure::empty(), InitialMeasure::empty()],
        }
    }

    fn spec(dt: f64) -> SchemeSpec {
        SchemeSpec {
            grid: Grid::new(-2.0, 2.0, 40).unwrap(),
            dt,
            da: 0.01,
            a_max: 8.0,
            cell_rule: CellRule::Midpoint,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let e = SpdeEngine::new(&params(10.0, 0.0, 1.0, 0.5), spec(0.004)).unwrap();
        let z = DistributionFunction::zeros(e.spec().grid);
        let rec = e
            .run([&z, &z], &ObservableSet::mass_only(), &RunOptions::new(0.2), 1, 0)
            .unwrap();
        for row in &rec.rows {
            for c in &row.colonies {
                assert_eq!(c.mass, 0.0);
                assert_eq!(c.observables[0].value, 0.0);
            }
        }
    }

    #[test]
    fn linear_profile_is_invariant_in_the_interior() {
        let e = SpdeEngine::new(&params(0.0, 0.0, 0.0, 0.0), spec(0.004)).unwrap();
        let g = e.spec().grid;
        let lin: Vec<f64> = (0..g.nodes_len()).map(|j| j as f64 * 0.05).collect();
        let u = DistributionFunction::new(g, lin.clone()).unwrap();
        let mut s = e.init([&u, &u], StreamKey::root(0)).unwrap();
        e.step(&mut s).unwrap();
        for j in 1..g.cells {
            assert!((s.values(0)[j] - lin[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn right_end_grows_like_exp_bt() {
        // γ = 0, b = βλ_n/n = 0.5 · 100/100
        // wide window so that no mass reaches the boundaries
        let mut sp = spec(0.004);
        sp.grid = Grid::new(-6.0, 6.0, 60).unwrap();
        let e = SpdeEngine::new(&params(100.0, 0.5, 0.0, 0.0), sp).unwrap();
        assert_eq!(e.b(0), 0.5);
        let g = e.spec().grid;
        let u = cdf(&FiniteMeasure::dirac(0.0, 1.0).unwrap(), &g).unwrap();
        let mut s = e.init([&u, &u], StreamKey::root(0)).unwrap();
        let steps = 250;
        for _ in 0..steps {
            e.step(&mut s).unwrap();
        }
        let exact = (1.0f64 + 0.5 * 0.004).powi(steps);
        assert!((s.right_end(0) - exact).abs() < 1e-7, "{} vs {exact}", s.right_end(0));
        assert!((s.right_end(0) - (0.5f64).exp()).abs() < 0.5 * 0.5 * 0.004 * 1.7);
    }

    #[test]
    fn empty_second_colony_stays_empty_without_migration() {
        let e = SpdeEngine::new(&params(100.0, 0.0, 1.0, 0.0), spec(0.004)).unwrap();
        let g = e.spec().grid;
        let u = cdf(&FiniteMeasure::dirac(0.0, 1.0).unwrap(), &g).unwrap();
        let z = DistributionFunction::zeros(g);
        let mut s = e.init([&u, &z], StreamKey::root(4)).unwrap();
        for _ in 0..100 {
            e.step(&mut s).unwrap();
            assert!(s.values(1).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_validation() {
        let e = SpdeEngine::new(&params(0.0, 0.0, 0.0, 0.0), spec(0.004)).unwrap();
        let g = e.spec().grid;
        let big = cdf(&FiniteMeasure::dirac(0.0, 3.0).unwrap(), &g).unwrap();
        let z = DistributionFunction::zeros(g);
        assert!(matches!(
            e.init([&big, &z], StreamKey::root(0)),
            Err(SpdeError::WindowTooSmall { .. })
        ));
        let other = DistributionFunction::zeros(Grid::new(-1.0, 1.0, 40).unwrap());
        assert!(e.init([&other, &z], StreamKey::root(0)).is_err());
    }

    #[test]
    fn overflow_is_an_error() {
        let mut sp = spec(0.004);
        sp.a_max = 4.0;
        sp.da = 0.01;
        // strong supercritical drift: b = 50
        let e = SpdeEngine::new(&params(100.0, 50.0, 0.0, 0.0), sp).unwrap();
        let u = cdf(&FiniteMeasure::dirac(0.0, 1.0).unwrap(), &sp.grid).unwrap();
        let mut s = e.init([&u, &u], StreamKey::root(0)).unwrap();
        let err = (0..200).find_map(|_| e.step(&mut s).err());
        assert!(matches!(err, Some(SpdeError::HeightOverflow { .. })));
    }

    #[test]
    fn steps_keep_monotone_nonnegative_and_projection_is_local() {
        let e = SpdeEngine::new(&params(200.0, 0.3, 1.0, 1.0), spec(0.004)).unwrap();
        let g = e.spec().grid;
        let u = cdf(&FiniteMeasure::from_atoms([(-0.5, 0.5), (0.3, 0.5)]).unwrap(), &g).unwrap();
        let mut s = e.init([&u, &u], StreamKey::root(8)).unwrap();
        let mut projected = 0.0;
        for _ in 0..200 {
            let r = e.step(&mut s).unwrap();
            for i in 0..2 {
                let v = s.values(i);
                assert!(v.iter().all(|&x| x >= 0.0));
                assert!(v.windows(2).all(|w| w[0] <= w[1]));
                assert!(r.right_end_shift[i] <= r.negative_increment_mass[i] + 1e-15);
                projected += r.negative_increment_mass[i];
            }
        }
        assert!(projected > 0.0, "noise should have required projection");
    }

    #[test]
    fn to_measure_round_trip() {
        let e = SpdeEngine::new(&params(0.0, 0.0, 0.0, 0.0), spec(0.004)).unwrap();
        let g = e.spec().grid;
        let u = cdf(
            &FiniteMeasure::from_atoms([(-1.0, 0.25), (0.0, 1.0), (1.5, 0.5)]).unwrap(),
            &g,
        )
        .unwrap();
        let s = e.init([&u, &u], StreamKey::root(0)).unwrap();
        let back = cdf(&e.to_measure(&s, 0), &g).unwrap();
        assert_eq!(back.values(), u.values());
    }
}
