//! Monte Carlo checks of the martingale problem on sets of [`PathRecord`]s:
//! drift, quadratic variation, covariation, moment bounds and the
//! particle-to-SPDE trend in `ρ`.
//!
//! Every check is a pure function of its records and arguments, so reports
//! are reproducible bit for bit.

mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{windowed_rho, DistributionFunction, Grid};
use crate::record::{PathRecord, StepRow};
use crate::rng::StreamKey;

pub use stats::{summarize, weighted_slope, z_score, Summary};

/// Minimum replicas for any statistical check.
pub const MIN_REPLICAS: usize = 30;

pub const DEFAULT_THRESHOLD: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("{got} replicas, at least {need} are required")]
    TooFewReplicas { need: usize, got: usize },
    #[error("records use different snapshot grids or none")]
    GridMismatch,
    #[error("colony {colony} has no observable {index}")]
    MissingObservable { colony: usize, index: usize },
    #[error("no recorded row at t = {t}")]
    MissingCheckpoint { t: f64 },
    #[error("no snapshot of colony {colony} at t = {t}")]
    MissingSnapshot { t: f64, colony: usize },
    #[error("no cross pair {0}")]
    MissingPair(usize),
    #[error("moment power {0} was not recorded")]
    MissingPower(f64),
}

/// How a report turns its numbers into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PassRule {
    /// `|z| ≤ threshold`.
    Within { threshold: f64 },
    /// `|estimate/target − 1| ≤ tol`; `estimate` holds the ratio itself.
    Ratio { tol: f64 },
    /// `z > threshold`.
    Exceeds { threshold: f64 },
    /// `estimate + multiplier · stderr ≤ limit`.
    UpperConfidence { multiplier: f64, limit: f64 },
}

impl PassRule {
    fn decide(&self, estimate: f64, stderr: f64, target: f64, z: f64) -> bool {
        match *self {
            PassRule::Within { threshold } => z.abs() <= threshold,
            PassRule::Ratio { tol } => (estimate - target).abs() <= tol,
            PassRule::Exceeds { threshold } => z > threshold,
            PassRule::UpperConfidence { multiplier, limit } => estimate + multiplier * stderr <= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub z: f64,
    pub pass: bool,
    pub rule: PassRule,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl TestReport {
    pub fn new(
        test: impl Into<String>,
        statistic: impl Into<String>,
        estimate: f64,
        stderr: f64,
        target: f64,
        rule: PassRule,
    ) -> Self {
        let z = z_score(estimate, target, stderr);
        let pass = rule.decide(estimate, stderr, target, z);
        Self {
            test: test.into(),
            statistic: statistic.into(),
            estimate,
            stderr,
            target,
            z,
            pass,
            rule,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    /// Re-evaluates with a different rule.
    pub fn retested(mut self, rule: PassRule) -> Self {
        self.pass = rule.decide(self.estimate, self.stderr, self.target, self.z);
        self.rule = rule;
        self
    }
}

fn require(records: &[PathRecord]) -> Result<(), DiagError> {
    if records.len() < MIN_REPLICAS {
        return Err(DiagError::TooFewReplicas {
            need: MIN_REPLICAS,
            got: records.len(),
        });
    }
    Ok(())
}

fn rows_at<'a>(records: &'a [PathRecord], t: f64) -> Result<Vec<&'a StepRow>, DiagError> {
    records
        .iter()
        .map(|r| r.row_at_time(t).ok_or(DiagError::MissingCheckpoint { t }))
        .collect()
}

fn check_observable(records: &[PathRecord], colony: usize, index: usize) -> Result<(), DiagError> {
    let ok = records
        .iter()
        .all(|r| r.meta.colonies.get(colony).is_some_and(|c| index < c.labels.len()));
    if ok {
        Ok(())
    } else {
        Err(DiagError::MissingObservable { colony, index })
    }
}

fn label(records: &[PathRecord], colony: usize, index: usize) -> String {
    records[0].meta.colonies[colony].labels[index].clone()
}

/// Overrides of the drift coefficients used when recomputing residuals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MpSpec {
    /// Linear drift rate; the record's own `b` when `None`.
    pub b: Option<f64>,
    /// Multiplier of the coupling term; the record's own sign when `None`.
    pub coupling_sign: Option<f64>,
}

/// Tests `E[M(t)] = 0` at each checkpoint, one report per checkpoint.
///
/// With a default [`MpSpec`] the stored residuals are used; otherwise they
/// are rebuilt from the stored compensator components.
pub fn drift_test(
    records: &[PathRecord],
    colony: usize,
    observable: usize,
    mp: &MpSpec,
    checkpoints: &[f64],
    threshold: f64,
) -> Result<Vec<TestReport>, DiagError> {
    require(records)?;
    check_observable(records, colony, observable)?;
    let name = label(records, colony, observable);
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let residuals: Vec<f64> = records
            .iter()
            .map(|r| {
                let row = r.row_at_time(t).ok_or(DiagError::MissingCheckpoint { t })?;
                let o = &row.colonies[colony].observables[observable];
                if *mp == MpSpec::default() {
                    return Ok(o.residual);
                }
                let meta = &r.meta.colonies[colony];
                let v0 = r.rows[0].colonies[colony].observables[observable].value;
                let b = mp.b.unwrap_or(meta.b);
                let sign = mp.coupling_sign.unwrap_or(meta.coupling_sign);
                Ok(o.value - v0 - (o.laplacian + b * o.linear + sign * o.coupling))
            })
            .collect::<Result<_, DiagError>>()?;
        let s = summarize(&residuals);
        out.push(TestReport::new(
            format!("drift[c{}:{}@t={}]", colony + 1, name, t),
            "mean_residual",
            s.mean,
            s.se,
            0.0,
            PassRule::Within { threshold },
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QvMode {
    /// Target `γ ∫⟨μ_s, f²⟩ds`.
    Limit,
    /// Target the engine's own expected quadratic variation.
    Finite,
}

/// Ratio of replica-mean realized QV `Σ(ΔM)²` to the replica-mean target
/// at time `t`, passing when the ratio lies within `1 ± tol`.
///
/// `gamma` overrides the record's `γ` in limit mode. The standard error is
/// the delta-method error of a ratio of means.
pub fn qv_test(
    records: &[PathRecord],
    colony: usize,
    observable: usize,
    mode: QvMode,
    gamma: Option<f64>,
    t: f64,
    tol: f64,
) -> Result<TestReport, DiagError> {
    require(records)?;
    check_observable(records, colony, observable)?;
    let rows = rows_at(records, t)?;
    let (mut realized, mut target) = (Vec::new(), Vec::new());
    for (r, row) in records.iter().zip(&rows) {
        let o = &row.colonies[colony].observables[observable];
        realized.push(o.realized_qv);
        target.push(match mode {
            QvMode::Limit => gamma.unwrap_or(r.meta.colonies[colony].gamma) * o.occupation_sq,
            QvMode::Finite => o.finite_qv,
        });
    }
    let x = summarize(&realized);
    let y = summarize(&target);
    let name = label(records, colony, observable);
    let test = format!(
        "qv_{}[c{}:{}@t={}]",
        match mode {
            QvMode::Limit => "limit",
            QvMode::Finite => "finite",
        },
        colony + 1,
        name,
        t
    );
    let rule = PassRule::Ratio { tol };
    if y.mean == 0.0 {
        // both sides vanish identically, or the target does and the data do not
        let ratio = if x.mean == 0.0 { 1.0 } else { f64::INFINITY };
        return Ok(TestReport::new(test, "qv_ratio", ratio, 0.0, 1.0, rule)
            .with_note(format!("target mean 0, realized mean {}", x.mean)));
    }
    let ratio = x.mean / y.mean;
    let n = realized.len() as f64;
    let cov = realized
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - x.mean) * (b - y.mean))
        .sum::<f64>()
        / (n - 1.0);
    let var = (x.var - 2.0 * ratio * cov + ratio * ratio * y.var).max(0.0) / (n * y.mean * y.mean);
    Ok(TestReport::new(test, "qv_ratio", ratio, var.sqrt(), 1.0, rule)
        .with_note(format!("realized {:.6e}, target {:.6e}", x.mean, y.mean)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMode {
    /// Target 0.
    Limit,
    /// Target `−Σ h (1/n)⟨χ,g⟩⟨μ¹, fη⟩`, the negative of the stored
    /// leading term.
    Finite,
}

/// Replica mean of the realized covariation `Σ ΔM¹ ΔM̂²` of cross pair
/// `pair` at time `t`, z-tested against the mode's target.
///
/// In finite mode the target is random, so the test statistic is the mean
/// of `realized + leading` per replica.
pub fn covariation_test(
    records: &[PathRecord],
    pair: usize,
    mode: CovMode,
    t: f64,
    threshold: f64,
) -> Result<TestReport, DiagError> {
    require(records)?;
    if records.iter().any(|r| pair >= r.meta.cross_pairs.len()) {
        return Err(DiagError::MissingPair(pair));
    }
    let rows = rows_at(records, t)?;
    let mut realized = Vec::with_capacity(rows.len());
    let mut leading = Vec::with_capacity(rows.len());
    let mut diff = Vec::with_capacity(rows.len());
    for row in &rows {
        let c = row.cross.get(pair).ok_or(DiagError::MissingPair(pair))?;
        let target = match mode {
            CovMode::Limit => 0.0,
            CovMode::Finite => -c.leading,
        };
        realized.push(c.realized);
        leading.push(target);
        diff.push(c.realized - target);
    }
    let x = summarize(&realized);
    let y = summarize(&leading);
    let d = summarize(&diff);
    let (f, g) = records[0].meta.cross_pairs[pair];
    let names = (label(records, 0, f), label(records, 1, g));
    let test = format!(
        "covariation_{}[{}x{}@t={}]",
        match mode {
            CovMode::Limit => "limit",
            CovMode::Finite => "finite",
        },
        names.0,
        names.1,
        t
    );
    let mut report = TestReport::new(
        test,
        "mean_cross_variation",
        x.mean,
        d.se,
        y.mean,
        PassRule::Within { threshold },
    );
    // the target is itself a replica mean; z uses the paired differences
    report.z = z_score(d.mean, 0.0, d.se);
    report = report.retested(PassRule::Within { threshold });
    if mode == CovMode::Finite {
        report.note = "target keeps the leading term only".into();
    }
    Ok(report)
}

/// Mean and standard error of `sup_{t≤T}(m₁^{2p} + m₂^{2p})` per group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Weighted least-squares slope of the sup-moment estimate against
/// `log₂ n`; passes when `slope + 2·se ≤ 0.05 · (mean estimate)`.
pub fn moment_bound_test(
    groups: &[(usize, &[PathRecord])],
    p: f64,
) -> Result<(TestReport, Vec<MomentPoint>), DiagError> {
    let mut points = Vec::with_capacity(groups.len());
    for &(n, records) in groups {
        require(records)?;
        let values: Vec<f64> = records
            .iter()
            .map(|r| {
                r.summary
                    .sup_moments
                    .iter()
                    .find(|(q, _)| *q == p)
                    .map(|(_, v)| *v)
                    .ok_or(DiagError::MissingPower(p))
            })
            .collect::<Result<_, _>>()?;
        let s = summarize(&values);
        points.push(MomentPoint {
            n,
            mean: s.mean,
            stderr: s.se,
        });
    }
    let x: Vec<f64> = points.iter().map(|q| (q.n as f64).log2()).collect();
    let y: Vec<f64> = points.iter().map(|q| q.mean).collect();
    let se: Vec<f64> = points.iter().map(|q| q.stderr).collect();
    let (slope, slope_se) = if points.len() >= 2 {
        weighted_slope(&x, &y, &se)
    } else {
        (0.0, f64::INFINITY)
    };
    let overall = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let report = TestReport::new(
        format!("moment_bound[p={p}]"),
        "slope_vs_log2_n",
        slope,
        slope_se,
        0.0,
        PassRule::UpperConfidence {
            multiplier: 2.0,
            limit: 0.05 * overall,
        },
    )
    .with_note(format!("mean estimate {overall:.6}"));
    Ok((report, points))
}

/// `ρ` between the mean particle CDF at one `n` and the mean SPDE CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoPoint {
    pub n: usize,
    pub colony: usize,
    pub rho: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceOutcome {
    pub points: Vec<RhoPoint>,
    /// One report per consecutive pair of `n` values and colony.
    pub reports: Vec<TestReport>,
}

fn snapshot_matrix<'a>(
    records: &'a [PathRecord],
    t: f64,
    colony: usize,
    grid: &Grid,
) -> Result<Vec<&'a [f64]>, DiagError> {
    records
        .iter()
        .map(|r| {
            if r.meta.snapshot_grid.as_ref() != Some(grid) {
                return Err(DiagError::GridMismatch);
            }
            r.snapshot(t, colony)
                .map(|s| s.values.as_slice())
                .ok_or(DiagError::MissingSnapshot { t, colony })
        })
        .collect()
}

fn mean_of(rows: &[&[f64]], pick: impl Iterator<Item = usize>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    let mut count = 0usize;
    for i in pick {
        for (a, v) in acc.iter_mut().zip(rows[i]) {
            *a += v;
        }
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

fn rho_of(grid: Grid, a: Vec<f64>, b: Vec<f64>) -> f64 {
    let a = DistributionFunction::from_parts_unchecked(grid, a);
    let b = DistributionFunction::from_parts_unchecked(grid, b);
    windowed_rho(&a, &b).expect("same grid")
}

/// Windowed `ρ` between replica-mean particle CDFs and the replica-mean
/// SPDE CDF at time `t`, per colony and `n`, with bootstrap standard
/// errors from `bootstrap` joint resamples of both replica sets.
///
/// Each drop `ρ(n_k) − ρ(n_{k+1})` passes when it exceeds
/// `2·√(se_k² + se_{k+1}²)`. A colony whose CDFs agree exactly at every
/// `n` passes trivially.
pub fn convergence_test(
    particles: &[(usize, &[PathRecord])],
    spde: &[PathRecord],
    t: f64,
    bootstrap: usize,
    seed: u64,
) -> Result<ConvergenceOutcome, DiagError> {
    require(spde)?;
    let grid = spde[0].meta.snapshot_grid.ok_or(DiagError::GridMismatch)?;
    let len = grid.nodes_len();
    let colonies = spde[0].meta.colonies.len();
    let mut points = Vec::new();
    let mut reports = Vec::new();
    for colony in 0..colonies {
        let s_rows = snapshot_matrix(spde, t, colony, &grid)?;
        let s_mean = mean_of(&s_rows, 0..s_rows.len(), len);
        let mut col_points = Vec::with_capacity(particles.len());
        for (g, &(n, records)) in particles.iter().enumerate() {
            require(records)?;
            let p_rows = snapshot_matrix(records, t, colony, &grid)?;
            let rho = rho_of(grid, mean_of(&p_rows, 0..p_rows.len(), len), s_mean.clone());
            let key = StreamKey::root(seed).child(colony as u64).child(g as u64);
            let mut rng = key.stream();
            let draws: Vec<f64> = (0..bootstrap)
                .map(|_| {
                    let pm = resample_mean(&p_rows, len, &mut rng);
                    let sm = resample_mean(&s_rows, len, &mut rng);
                    rho_of(grid, pm, sm)
                })
                .collect();
            let stderr = if bootstrap >= 2 {
                summarize(&draws).var.sqrt()
            } else {
                0.0
            };
            col_points.push(RhoPoint { n, colony, rho, stderr });
        }
        for w in col_points.windows(2) {
            let drop = w[0].rho - w[1].rho;
            let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            let test = format!("convergence[c{}:n={}->{}@t={}]", colony + 1, w[0].n, w[1].n, t);
            let rule = PassRule::Exceeds { threshold: 2.0 };
            let mut report = TestReport::new(test, "rho_drop", drop, se, 0.0, rule);
            if w[0].rho == 0.0 && w[1].rho == 0.0 {
                report.z = 0.0;
                report.pass = true;
                report.note = "identical mean distribution functions".into();
            } else {
                report.note = format!("rho {:.6e} -> {:.6e}", w[0].rho, w[1].rho);
            }
            reports.push(report);
        }
        points.extend(col_points);
    }
    Ok(ConvergenceOutcome { points, reports })
}

fn resample_mean<R: rand::Rng>(rows: &[&[f64]], len: usize, rng: &mut R) -> Vec<f64> {
    let m = rows.len();
    let picks: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
    mean_of(rows, picks.into_iter(), len)
}

#[cfg(test)]
mod tests;
