use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::measures::FiniteMeasure;
use crate::migration::MigrationIntensity;
use crate::particle::{run, ColonyParams, InitialMeasure, ModelParams, ObservableSet, ParticleEngine};
use crate::record::{
    ColonyMeta, ColonyRow, CrossRow, EngineKind, ObservableRow, RecordMeta, RecordSummary, RunOptions, Snapshot,
};

fn obs_row(value: f64, residual: f64, realized_qv: f64, occupation_sq: f64) -> ObservableRow {
    ObservableRow {
        value,
        laplacian: 0.0,
        linear: occupation_sq,
        coupling: 0.0,
        compensator: value - 1.0 - residual,
        residual,
        realized_qv,
        occupation_sq,
        finite_qv: occupation_sq,
        pairing: None,
    }
}

/// One-observable, one-colony record with rows at t = 0 and t = 1.
fn synthetic(replica: u64, residual: f64, qv: f64, occupation: f64) -> PathRecord {
    let meta = RecordMeta {
        engine: EngineKind::Particles,
        replica,
        seed: 0,
        n: Some(10),
        dt: 0.5,
        steps: 2,
        config_hash: String::new(),
        colonies: vec![
            ColonyMeta {
                labels: vec!["one".into()],
                b: 0.0,
                gamma: 1.0,
                coupling_sign: -1.0,
            },
            ColonyMeta {
                labels: vec!["one".into()],
                b: 0.0,
                gamma: 1.0,
                coupling_sign: 1.0,
            },
        ],
        cross_pairs: vec![(0, 0)],
        snapshot_grid: None,
    };
    let row = |step: usize, r: f64, q: f64, occ: f64, cross: CrossRow| StepRow {
        step,
        t: step as f64 * 0.5,
        colonies: vec![
            ColonyRow {
                mass: 1.0 + r,
                particles: None,
                observables: vec![obs_row(1.0 + r, r, q, occ)],
            },
            ColonyRow {
                mass: 1.0,
                particles: None,
                observables: vec![obs_row(1.0, 0.0, 0.0, 0.0)],
            },
        ],
        cross: vec![cross],
    };
    let zero = CrossRow {
        realized: 0.0,
        leading: 0.0,
    };
    let end = CrossRow {
        realized: residual,
        leading: occupation,
    };
    PathRecord {
        meta,
        rows: vec![row(0, 0.0, 0.0, 0.0, zero), row(2, residual, qv, occupation, end)],
        summary: RecordSummary::default(),
    }
}

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut s = StreamKey::root(seed).stream();
    (0..n).map(|_| StandardNormal.sample(&mut s)).collect()
}

fn noise_records(shift: f64) -> Vec<PathRecord> {
    normals(200, 11)
        .into_iter()
        .enumerate()
        .map(|(i, z)| synthetic(i as u64, z + shift, 1.0 + 0.1 * z, 1.0))
        .collect()
}

#[test]
fn too_few_replicas() {
    let recs: Vec<_> = (0..5).map(|i| synthetic(i, 0.0, 0.0, 0.0)).collect();
    let err = drift_test(&recs, 0, 0, &MpSpec::default(), &[1.0], 4.0).unwrap_err();
    assert_eq!(err, DiagError::TooFewReplicas { need: 30, got: 5 });
    assert!(matches!(
        drift_test(&noise_records(0.0), 0, 3, &MpSpec::default(), &[1.0], 4.0),
        Err(DiagError::MissingObservable { .. })
    ));
    assert!(matches!(
        drift_test(&noise_records(0.0), 0, 0, &MpSpec::default(), &[0.7], 4.0),
        Err(DiagError::MissingCheckpoint { .. })
    ));
}

#[test]
fn drift_negative_control_fails_at_five_se() {
    let recs = noise_records(0.0);
    let ok = &drift_test(&recs, 0, 0, &MpSpec::default(), &[1.0], 4.0).unwrap()[0];
    let se = ok.stderr;
    let biased = noise_records(ok.estimate.abs() + 5.0 * se);
    let bad = &drift_test(&biased, 0, 0, &MpSpec::default(), &[1.0], 4.0).unwrap()[0];
    assert!(ok.pass, "{ok:?}");
    assert!(!bad.pass, "{bad:?}");
}

#[test]
fn qv_ratio_and_negative_control() {
    let recs = noise_records(0.0);
    let r = qv_test(&recs, 0, 0, QvMode::Limit, None, 1.0, 0.1).unwrap();
    assert!(r.pass && (r.estimate - 1.0).abs() < 0.05, "{r:?}");
    let r = qv_test(&recs, 0, 0, QvMode::Limit, Some(1.5), 1.0, 0.1).unwrap();
    assert!(!r.pass);
    // γ = 0 on both sides
    let zero: Vec<_> = (0..40).map(|i| synthetic(i, 0.0, 0.0, 0.0)).collect();
    let r = qv_test(&zero, 0, 0, QvMode::Finite, None, 1.0, 0.1).unwrap();
    assert!(r.pass);
    assert_eq!(r.estimate, 1.0);
}

#[test]
fn qv_delta_method_se_matches_replication() {
    // ratio of means of two independent samples, compared to the spread of
    // the ratio over many independent sample sets
    let mut ratios = Vec::new();
    let mut ses = Vec::new();
    for rep in 0..200u64 {
        let z = normals(100, 1000 + rep);
        let recs: Vec<_> = z
            .iter()
            .enumerate()
            .map(|(i, z)| synthetic(i as u64, 0.0, 2.0 + 0.5 * z, 2.0))
            .collect();
        let r = qv_test(&recs, 0, 0, QvMode::Finite, None, 1.0, 0.1).unwrap();
        ratios.push(r.estimate);
        ses.push(r.stderr);
    }
    let spread = summarize(&ratios).var.sqrt();
    let mean_se = ses.iter().sum::<f64>() / ses.len() as f64;
    // exact value 0.5/2/√100 = 0.025
    assert!((mean_se - 0.025).abs() < 1e-3, "{mean_se}");
    assert!((spread / mean_se - 1.0).abs() < 0.15, "{spread} {mean_se}");
}

#[test]
fn covariation_modes() {
    let recs = noise_records(0.0);
    let r = covariation_test(&recs, 0, CovMode::Limit, 1.0, 4.0).unwrap();
    assert!(r.pass, "{r:?}");
    // realized ≈ 0 but finite target is −1 at every replica
    let r = covariation_test(&recs, 0, CovMode::Finite, 1.0, 4.0).unwrap();
    assert_eq!(r.target, -1.0);
    assert!(!r.pass);
    let shifted = noise_records(-1.0);
    let r = covariation_test(&shifted, 0, CovMode::Finite, 1.0, 4.0).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(matches!(
        covariation_test(&recs, 3, CovMode::Limit, 1.0, 4.0),
        Err(DiagError::MissingPair(3))
    ));
}

fn with_moment(mut r: PathRecord, v: f64) -> PathRecord {
    r.summary.sup_moments = vec![(1.0, v)];
    r
}

#[test]
fn moment_trend_detects_growth() {
    let flat: Vec<Vec<PathRecord>> = (0..3)
        .map(|g| {
            normals(100, 50 + g)
                .into_iter()
                .map(|z| with_moment(synthetic(0, 0.0, 0.0, 0.0), 2.0 + 0.1 * z))
                .collect()
        })
        .collect();
    let groups: Vec<(usize, &[PathRecord])> = [250, 500, 1000]
        .iter()
        .zip(&flat)
        .map(|(&n, r)| (n, r.as_slice()))
        .collect();
    let (r, pts) = moment_bound_test(&groups, 1.0).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(pts.len(), 3);
    let growing: Vec<Vec<PathRecord>> = flat
        .iter()
        .enumerate()
        .map(|(g, rs)| {
            rs.iter()
                .map(|r| {
                    let v = r.summary.sup_moments[0].1 + 0.3 * g as f64;
                    with_moment(r.clone(), v)
                })
                .collect()
        })
        .collect();
    let groups: Vec<(usize, &[PathRecord])> = [250, 500, 1000]
        .iter()
        .zip(&growing)
        .map(|(&n, r)| (n, r.as_slice()))
        .collect();
    let (r, _) = moment_bound_test(&groups, 1.0).unwrap();
    assert!(!r.pass, "{r:?}");
    assert!(matches!(
        moment_bound_test(&groups, 2.0),
        Err(DiagError::MissingPower(_))
    ));
}

#[test]
fn moment_trivial_case_is_constant() {
    // no branching and no migration: the sup equals the initial value exactly
    let groups: Vec<Vec<PathRecord>> = [250usize, 500, 1000]
        .iter()
        .map(|&n| {
            let p = model(n, 0.0, 0.0, 0.0);
            let e = ParticleEngine::new(p).unwrap();
            (0..30)
                .map(|i| run(&e, &ObservableSet::mass_only(), &RunOptions::new(0.1), 1, i).unwrap())
                .collect()
        })
        .collect();
    let g: Vec<(usize, &[PathRecord])> = [250, 500, 1000]
        .iter()
        .zip(&groups)
        .map(|(&n, r)| (n, r.as_slice()))
        .collect();
    let (r, pts) = moment_bound_test(&g, 1.0).unwrap();
    // masses are sums of n weights 1/n, equal to 1 up to rounding
    assert!(
        pts.iter().all(|p| (p.mean - 2.0).abs() < 1e-12 && p.stderr < 1e-12),
        "{pts:?}"
    );
    assert!(r.estimate.abs() < 1e-12);
    assert!(r.pass);
}

fn model(n: usize, branching: f64, c: f64, shift: f64) -> ModelParams {
    ModelParams {
        n,
        h: 1.0 / n as f64,
        colonies: [ColonyParams {
            branching_rate: branching,
            offspring_mean_shift: shift,
            offspring_variance: 1.0,
        }; 2],
        eta: MigrationIntensity::Constant { c, eta_max: None },
        chi: FiniteMeasure::dirac(0.0, 1.0).unwrap(),
        initial: [
            InitialMeasure::Atoms(FiniteMeasure::dirac(0.0, 1.0).unwrap()),
            InitialMeasure::Atoms(FiniteMeasure::dirac(0.0, 1.0).unwrap()),
        ],
    }
}

#[test]
fn deterministic_config_has_exact_zero_z() {
    let e = ParticleEngine::new(model(50, 0.0, 0.0, 0.0)).unwrap();
    let recs: Vec<_> = (0..30)
        .map(|i| run(&e, &ObservableSet::mass_only(), &RunOptions::new(0.5), 2, i).unwrap())
        .collect();
    let r = &drift_test(&recs, 0, 0, &MpSpec::default(), &[0.5], 4.0).unwrap()[0];
    assert_eq!((r.estimate, r.stderr, r.z), (0.0, 0.0, 0.0));
    assert!(r.pass);
}

#[test]
fn wrong_b_is_rejected_on_particle_records() {
    // critical branching with drift b = 0; testing against b + 0.5 must fail
    let e = ParticleEngine::new(model(200, 40.0, 0.0, 0.0)).unwrap();
    let recs: Vec<_> = (0..200)
        .map(|i| run(&e, &ObservableSet::mass_only(), &RunOptions::new(1.0), 9, i).unwrap())
        .collect();
    let good = &drift_test(&recs, 0, 0, &MpSpec::default(), &[0.5, 1.0], 4.0).unwrap();
    assert!(good.iter().all(|r| r.pass), "{good:?}");
    let wrong = MpSpec {
        b: Some(0.5),
        coupling_sign: None,
    };
    let bad = &drift_test(&recs, 0, 0, &wrong, &[1.0], 4.0).unwrap()[0];
    assert!(!bad.pass, "{bad:?}");
}

fn snap_record(grid: Grid, values: Vec<f64>, dt: f64) -> PathRecord {
    let mut r = synthetic(0, 0.0, 0.0, 0.0);
    r.meta.dt = dt;
    r.meta.snapshot_grid = Some(grid);
    let step = (0.5 / dt).round() as usize;
    r.summary.snapshots = (0..2)
        .map(|colony| Snapshot {
            step,
            t: 0.5,
            colony,
            values: if colony == 0 {
                values.clone()
            } else {
                vec![0.0; values.len()]
            },
        })
        .collect();
    r
}

fn step_cdf(grid: &Grid, at: f64, mass: f64) -> Vec<f64> {
    grid.nodes().iter().map(|&x| if x >= at { mass } else { 0.0 }).collect()
}

#[test]
fn convergence_detects_shrinking_bias() {
    let grid = Grid::new(-2.0, 2.0, 40).unwrap();
    let spde: Vec<_> = (0..40)
        .map(|_| snap_record(grid, step_cdf(&grid, 0.0, 1.0), 0.01))
        .collect();
    let mut rng = StreamKey::root(5).stream();
    let groups: Vec<Vec<PathRecord>> = [0.8, 0.4, 0.1]
        .iter()
        .map(|&offset| {
            (0..40)
                .map(|_| {
                    let jitter: f64 = rng.random_range(-0.05..0.05);
                    snap_record(grid, step_cdf(&grid, offset + jitter, 1.0), 0.02)
                })
                .collect()
        })
        .collect();
    let g: Vec<(usize, &[PathRecord])> = [50, 200, 800]
        .iter()
        .zip(&groups)
        .map(|(&n, r)| (n, r.as_slice()))
        .collect();
    let out = convergence_test(&g, &spde, 0.5, 100, 1).unwrap();
    assert_eq!(out.points.len(), 6);
    assert_eq!(out.reports.len(), 4);
    assert!(out.reports.iter().all(|r| r.pass), "{:?}", out.reports);
    // colony 2 is identically zero everywhere
    assert!(out.points.iter().filter(|p| p.colony == 1).all(|p| p.rho == 0.0));
    let again = convergence_test(&g, &spde, 0.5, 100, 1).unwrap();
    assert_eq!(again, out);

    // no improvement along n: the drop test fails
    let g: Vec<(usize, &[PathRecord])> = [50, 200, 800].iter().map(|&n| (n, groups[1].as_slice())).collect();
    let out = convergence_test(&g, &spde, 0.5, 100, 1).unwrap();
    assert!(out.reports.iter().filter(|r| r.test.contains("c1")).all(|r| !r.pass));
}

#[test]
fn convergence_grid_mismatch() {
    let grid = Grid::new(-2.0, 2.0, 40).unwrap();
    let other = Grid::new(-2.0, 2.0, 20).unwrap();
    let spde: Vec<_> = (0..40)
        .map(|_| snap_record(grid, step_cdf(&grid, 0.0, 1.0), 0.01))
        .collect();
    let parts: Vec<_> = (0..40)
        .map(|_| snap_record(other, step_cdf(&other, 0.0, 1.0), 0.01))
        .collect();
    let err = convergence_test(&[(50, parts.as_slice())], &spde, 0.5, 10, 1).unwrap_err();
    assert_eq!(err, DiagError::GridMismatch);
}

#[test]
fn pass_rules() {
    let r = TestReport::new("t", "s", 1.05, 0.01, 1.0, PassRule::Ratio { tol: 0.1 });
    assert!(r.pass);
    let r = TestReport::new("t", "s", 0.1, 0.02, 0.0, PassRule::Exceeds { threshold: 2.0 });
    assert!(r.pass && r.z == 5.0);
    let r = TestReport::new(
        "t",
        "s",
        0.1,
        0.1,
        0.0,
        PassRule::UpperConfidence {
            multiplier: 2.0,
            limit: 0.25,
        },
    );
    assert!(!r.pass);
}
