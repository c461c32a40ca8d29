//! Per-replica path records and the recorder that accumulates drift
//! compensators, martingale residuals and quadratic variations while an
//! engine runs.
//!
//! The compensator of observable `f` in colony `i` after `k` steps is
//!
//! ```text
//! A(k) = laplacian(k) + b_i · linear(k) + sign_i · coupling(k)
//! laplacian(k) = Σ_{ℓ<k} h · ½⟨μ_ℓ, f''⟩
//! linear(k)    = Σ_{ℓ<k} h · ⟨μ_ℓ, f⟩
//! coupling(k)  = Σ_{ℓ<k} h · c_ℓ(f)
//! ```
//!
//! where `c_ℓ(f)` is the migration (or immigration) rate supplied by the
//! engine and `sign_i` is −1 for the emigrating colony. The residual is
//! `M(k) = ⟨μ_k, f⟩ − ⟨μ_0, f⟩ − A(k)` and `realized_qv` is `Σ (ΔM)²`.

use serde::{Deserialize, Serialize};

use crate::measures::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Particles,
    Spde,
    Baseline,
}

/// Static description of one colony inside a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColonyMeta {
    pub labels: Vec<String>,
    /// Linear drift rate `b` used for the stored compensator.
    pub b: f64,
    /// Noise intensity `γ` of the limit martingale problem.
    pub gamma: f64,
    /// Sign of the coupling term in the compensator.
    pub coupling_sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub engine: EngineKind,
    pub replica: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub dt: f64,
    pub steps: usize,
    pub config_hash: String,
    pub colonies: Vec<ColonyMeta>,
    /// `(colony-1 observable, colony-2 observable)` index pairs.
    #[serde(default)]
    pub cross_pairs: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_grid: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRow {
    pub value: f64,
    pub laplacian: f64,
    pub linear: f64,
    pub coupling: f64,
    pub compensator: f64,
    pub residual: f64,
    pub realized_qv: f64,
    /// `Σ h ⟨μ_ℓ, f²⟩`.
    pub occupation_sq: f64,
    /// Expected quadratic variation of the engine at its own resolution.
    pub finite_qv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColonyRow {
    pub mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<u64>,
    pub observables: Vec<ObservableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    /// `Σ ΔM¹ ΔM̂²`.
    pub realized: f64,
    /// `Σ h (1/n) ⟨χ, g⟩ ⟨μ¹_ℓ, f η⟩`.
    pub leading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    pub colonies: Vec<ColonyRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cross: Vec<CrossRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    /// Offspring produced by branching events.
    pub births: u64,
    /// Branching events; each removes the parent.
    pub deaths: u64,
    /// Emigrations out of colony 1, or deposits in baseline mode.
    pub migrations: u64,
}

impl EventCounts {
    pub fn add(&mut self, other: &EventCounts) {
        self.births += other.births;
        self.deaths += other.deaths;
        self.migrations += other.migrations;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub colony: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    /// `(p, sup_k (m₁(k)^{2p} + m₂(k)^{2p}))`.
    pub sup_moments: Vec<(f64, f64)>,
    /// `max_k |A(k+1) − A(k)| / h` per colony and observable.
    pub drift_lipschitz: Vec<Vec<f64>>,
    pub events: Vec<EventCounts>,
    /// Total negative-increment mass removed by the SPDE projection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projected_mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub meta: RecordMeta,
    pub rows: Vec<StepRow>,
    pub summary: RecordSummary,
}

impl PathRecord {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Row recorded at exactly `step`, if any.
    pub fn row_at_step(&self, step: usize) -> Option<&StepRow> {
        self.rows
            .binary_search_by_key(&step, |r| r.step)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn row_at_time(&self, t: f64) -> Option<&StepRow> {
        self.row_at_step(step_of(t, self.meta.dt))
    }

    pub fn snapshot(&self, t: f64, colony: usize) -> Option<&Snapshot> {
        let step = step_of(t, self.meta.dt);
        self.summary
            .snapshots
            .iter()
            .find(|s| s.step == step && s.colony == colony)
    }
}

/// Nearest step index of time `t`.
pub fn step_of(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

/// Start-of-step ingredients for one observable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObservableInput {
    /// `⟨μ, f⟩`.
    pub value: f64,
    /// `⟨μ, f''⟩`.
    pub second: f64,
    /// Coupling rate; see the module docs.
    pub coupling: f64,
    /// `⟨μ, f²⟩`.
    pub square: f64,
    /// Conditional variance of `ΔM` per unit time.
    pub qv_rate: f64,
    pub pairing: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColonyInput {
    pub mass: f64,
    pub particles: Option<u64>,
    pub observables: Vec<ObservableInput>,
}

/// Which steps become rows and snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordPlan {
    pub stride: usize,
    pub checkpoints: Vec<usize>,
    pub snapshots: Vec<usize>,
    pub moment_powers: Vec<f64>,
}

impl RecordPlan {
    pub fn every_step() -> Self {
        Self {
            stride: 1,
            checkpoints: Vec::new(),
            snapshots: Vec::new(),
            moment_powers: vec![1.0, 2.0],
        }
    }

    pub fn records(&self, step: usize, last: usize) -> bool {
        step == 0 || step == last || (self.stride > 0 && step % self.stride == 0) || self.checkpoints.contains(&step)
    }

    pub fn snapshots_at(&self, step: usize) -> bool {
        self.snapshots.contains(&step)
    }
}

#[derive(Debug, Clone, Default)]
struct Acc {
    value0: f64,
    laplacian: f64,
    linear: f64,
    coupling: f64,
    compensator: f64,
    residual: f64,
    realized_qv: f64,
    occupation_sq: f64,
    finite_qv: f64,
    lipschitz: f64,
}

/// Engine-independent run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    pub plan: RecordPlan,
    pub snapshot_grid: Option<Grid>,
    pub config_hash: String,
}

impl RunOptions {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            plan: RecordPlan::every_step(),
            snapshot_grid: None,
            config_hash: String::new(),
        }
    }
}

/// Incremental builder of a [`PathRecord`].
///
/// Call [`observe`](Self::observe) at steps `0, 1, …, steps` with the
/// ingredients evaluated on the state at that step.
#[derive(Debug)]
pub struct Recorder {
    meta: RecordMeta,
    plan: RecordPlan,
    dt: f64,
    accs: Vec<Vec<Acc>>,
    pending: Option<(Vec<ColonyInput>, Vec<f64>)>,
    cross_realized: Vec<f64>,
    cross_leading: Vec<f64>,
    rows: Vec<StepRow>,
    sup_moments: Vec<f64>,
    summary: RecordSummary,
    next_step: usize,
}

impl Recorder {
    pub fn new(meta: RecordMeta, plan: RecordPlan) -> Self {
        let accs = meta
            .colonies
            .iter()
            .map(|c| vec![Acc::default(); c.labels.len()])
            .collect();
        let pairs = meta.cross_pairs.len();
        let sup_moments = vec![f64::NEG_INFINITY; plan.moment_powers.len()];
        Self {
            dt: meta.dt,
            meta,
            plan,
            accs,
            pending: None,
            cross_realized: vec![0.0; pairs],
            cross_leading: vec![0.0; pairs],
            rows: Vec::new(),
            sup_moments,
            summary: RecordSummary::default(),
            next_step: 0,
        }
    }

    pub fn wants_snapshot(&self, step: usize) -> bool {
        self.plan.snapshots_at(step)
    }

    pub fn push_snapshot(&mut self, step: usize, colony: usize, values: Vec<f64>) {
        self.summary.snapshots.push(Snapshot {
            step,
            t: step as f64 * self.dt,
            colony,
            values,
        });
    }

    /// `cross_rates[p]` is the per-unit-time leading covariation rate of
    /// pair `p` at this state.
    pub fn observe(&mut self, step: usize, colonies: Vec<ColonyInput>, cross_rates: Vec<f64>) {
        assert_eq!(step, self.next_step, "steps must be observed in order");
        assert_eq!(colonies.len(), self.accs.len());
        self.next_step += 1;
        let dt = self.dt;

        for (slot, p) in self.sup_moments.iter_mut().zip(&self.plan.moment_powers) {
            let m: f64 = colonies.iter().map(|c| c.mass.powf(2.0 * p)).sum();
            *slot = slot.max(m);
        }

        let mut deltas: Vec<Vec<f64>> = Vec::with_capacity(colonies.len());
        if let Some((prev, prev_cross)) = self.pending.take() {
            for (i, (accs, (now, before))) in self.accs.iter_mut().zip(colonies.iter().zip(&prev)).enumerate() {
                let meta = &self.meta.colonies[i];
                let mut d = Vec::with_capacity(accs.len());
                for (acc, (obs, start)) in accs.iter_mut().zip(now.observables.iter().zip(&before.observables)) {
                    acc.laplacian += dt * 0.5 * start.second;
                    acc.linear += dt * start.value;
                    acc.coupling += dt * start.coupling;
                    acc.occupation_sq += dt * start.square;
                    acc.finite_qv += dt * start.qv_rate;
                    let a = acc.laplacian + meta.b * acc.linear + meta.coupling_sign * acc.coupling;
                    acc.lipschitz = acc.lipschitz.max((a - acc.compensator).abs() / dt);
                    acc.compensator = a;
                    let m = obs.value - acc.value0 - a;
                    let dm = m - acc.residual;
                    acc.realized_qv += dm * dm;
                    acc.residual = m;
                    d.push(dm);
                }
                deltas.push(d);
            }
            for (p, &(f, g)) in self.meta.cross_pairs.iter().enumerate() {
                self.cross_realized[p] += deltas[0][f] * deltas[1][g];
                self.cross_leading[p] += dt * prev_cross[p];
            }
        } else {
            for (accs, now) in self.accs.iter_mut().zip(&colonies) {
                for (acc, obs) in accs.iter_mut().zip(&now.observables) {
                    acc.value0 = obs.value;
                }
            }
        }

        let last = self.meta.steps;
        if self.plan.records(step, last) {
            let colony_rows = colonies
                .iter()
                .zip(&self.accs)
                .map(|(c, accs)| ColonyRow {
                    mass: c.mass,
                    particles: c.particles,
                    observables: c
                        .observables
                        .iter()
                        .zip(accs)
                        .map(|(o, a)| ObservableRow {
                            value: o.value,
                            laplacian: a.laplacian,
                            linear: a.linear,
                            coupling: a.coupling,
                            compensator: a.compensator,
                            residual: a.residual,
                            realized_qv: a.realized_qv,
                            occupation_sq: a.occupation_sq,
                            finite_qv: a.finite_qv,
                            pairing: o.pairing,
                        })
                        .collect(),
                })
                .collect();
            let cross = self
                .cross_realized
                .iter()
                .zip(&self.cross_leading)
                .map(|(&realized, &leading)| CrossRow { realized, leading })
                .collect();
            self.rows.push(StepRow {
                step,
                t: step as f64 * dt,
                colonies: colony_rows,
                cross,
            });
        }
        self.pending = Some((colonies, cross_rates));
    }

    pub fn finish(mut self, events: Vec<EventCounts>, projected_mass: Option<f64>) -> PathRecord {
        self.summary.sup_moments = self.plan.moment_powers.iter().copied().zip(self.sup_moments).collect();
        self.summary.drift_lipschitz = self
            .accs
            .iter()
            .map(|a| a.iter().map(|x| x.lipschitz).collect())
            .collect();
        self.summary.events = events;
        self.summary.projected_mass = projected_mass;
        PathRecord {
            meta: self.meta,
            rows: self.rows,
            summary: self.summary,
        }
    }
}
