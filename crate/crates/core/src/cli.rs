//! Command-line front end.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::{resolve, Mode, RunConfig};
use crate::diagnostics::{
    convergence_test, covariation_test, drift_test, moment_bound_test, qv_test, CovMode, MpSpec, QvMode, TestReport,
    DEFAULT_THRESHOLD,
};
use crate::io::{read_records, write_records, write_report_csv, write_rho_csv, write_snapshot_csvs, write_summary_csv};
use crate::orchestrate::{run_job, workers_from_env, WORKERS_ENV};
use crate::record::{EngineKind, PathRecord};

#[derive(Debug, Parser)]
#[command(
    name = "superprocess",
    version,
    about = "Two-colony superprocess simulator and martingale-problem checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the branching particle system.
    SimulateParticles(SimulateArgs),
    /// Solve the distribution-function SPDE system.
    SimulateSpde(SimulateArgs),
    /// Run the single-colony immigration model.
    SimulateBaseline(SimulateArgs),
    /// Run diagnostic suites on stored records.
    Verify(VerifyArgs),
    /// Particle versus SPDE convergence in rho.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Drift,
    Qv,
    QvFinite,
    Covariation,
    Moments,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directories written by a simulate command.
    #[arg(long, required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    #[arg(long, value_enum, num_args = 1.., default_value = "all")]
    pub suite: Vec<Suite>,
    /// Report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint times; the last recorded time when absent.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Relative tolerance of the quadratic-variation ratio.
    #[arg(long, default_value_t = 0.1)]
    pub qv_tol: f64,
    /// Power `p` of the moment-bound suite.
    #[arg(long, default_value_t = 1.0)]
    pub moment_power: f64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Particle record directories, in increasing n.
    #[arg(long, required = true, num_args = 1..)]
    pub particles: Vec<PathBuf>,
    #[arg(long)]
    pub spde: PathBuf,
    /// Snapshot time.
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    /// rho trend CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Report CSV of the drop tests.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Runs a parsed command; `Ok(false)` means a requested suite failed.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SimulateParticles(a) => simulate(a, Mode::Particles),
        Command::SimulateSpde(a) => simulate(a, Mode::Spde),
        Command::SimulateBaseline(a) => simulate(a, Mode::Baseline),
        Command::Verify(a) => verify(a),
        Command::Compare(a) => compare(a),
    }
}

fn simulate(args: SimulateArgs, mode: Mode) -> Result<bool> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = RunConfig::from_json(&text)?;
    if config.mode != mode {
        bail!("config mode is {:?}, this command runs {:?}", config.mode, mode);
    }
    if let Some(r) = args.replicas {
        config.replicas = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = args.out {
        config.output_dir = o;
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    let job = resolve(config, base)?;
    let out = job.config.output_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.json"), job.config.to_json())?;
    let workers = args.workers.or_else(workers_from_env);
    info!("running {} replicas, config hash {}", job.config.replicas, job.hash);
    let records = run_job(&job, workers)?;
    write_records(&out, &records)?;
    write_summary_csv(&records, BufWriter::new(File::create(out.join("summary.csv"))?))?;
    write_snapshot_csvs(&out, &records)?;
    info!("wrote {}", out.display());
    Ok(true)
}

fn last_time(records: &[PathRecord]) -> f64 {
    records[0].rows.last().map_or(0.0, |r| r.t)
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let suites: Vec<Suite> = if args.suite.contains(&Suite::All) {
        vec![
            Suite::Drift,
            Suite::Qv,
            Suite::QvFinite,
            Suite::Covariation,
            Suite::Moments,
        ]
    } else {
        args.suite.clone()
    };
    let mut groups = Vec::new();
    for dir in &args.records {
        let records = read_records(dir)?;
        if records.is_empty() {
            bail!("no records in {}", dir.display());
        }
        groups.push(records);
    }
    let mut reports: Vec<TestReport> = Vec::new();
    for records in &groups {
        let checkpoints = if args.checkpoints.is_empty() {
            vec![last_time(records)]
        } else {
            args.checkpoints.clone()
        };
        let tag = |mut r: TestReport| {
            r.test = format!("{}:{}", engine_tag(&records[0]), r.test);
            r
        };
        for (c, meta) in records[0].meta.colonies.iter().enumerate() {
            for k in 0..meta.labels.len() {
                if suites.contains(&Suite::Drift) {
                    let rs = drift_test(records, c, k, &MpSpec::default(), &checkpoints, args.threshold)?;
                    reports.extend(rs.into_iter().map(tag));
                }
                for &t in &checkpoints {
                    if suites.contains(&Suite::Qv) {
                        reports.push(tag(qv_test(records, c, k, QvMode::Limit, None, t, args.qv_tol)?));
                    }
                    if suites.contains(&Suite::QvFinite) {
                        reports.push(tag(qv_test(records, c, k, QvMode::Finite, None, t, args.qv_tol)?));
                    }
                }
            }
        }
        if suites.contains(&Suite::Covariation) {
            let mode = if records[0].meta.engine == EngineKind::Particles {
                CovMode::Finite
            } else {
                CovMode::Limit
            };
            for p in 0..records[0].meta.cross_pairs.len() {
                for &t in &checkpoints {
                    reports.push(tag(covariation_test(records, p, mode, t, args.threshold)?));
                }
            }
        }
    }
    if suites.contains(&Suite::Moments) {
        let sized: Vec<(usize, &[PathRecord])> = groups
            .iter()
            .filter_map(|g| g[0].meta.n.map(|n| (n, g.as_slice())))
            .collect();
        if sized.len() >= 2 {
            let mut sorted = sized;
            sorted.sort_by_key(|(n, _)| *n);
            reports.push(moment_bound_test(&sorted, args.moment_power)?.0);
        } else if suites.len() == 1 {
            bail!("the moments suite needs record directories at two or more n");
        }
    }
    let provenance = provenance(&groups);
    write_report_csv(&reports, &provenance, BufWriter::new(File::create(&args.out)?))?;
    std::fs::write(args.out.with_extension("json"), serde_json::to_string_pretty(&reports)?)?;
    print_reports(&reports);
    Ok(reports.iter().all(|r| r.pass))
}

fn engine_tag(r: &PathRecord) -> String {
    match (r.meta.engine, r.meta.n) {
        (EngineKind::Particles, Some(n)) => format!("particles(n={n})"),
        (EngineKind::Baseline, Some(n)) => format!("baseline(n={n})"),
        (EngineKind::Spde, _) => "spde".into(),
        (e, None) => format!("{e:?}").to_lowercase(),
    }
}

fn provenance(groups: &[Vec<PathRecord>]) -> String {
    groups
        .iter()
        .map(|g| format!("config_hash={} seed={}", g[0].meta.config_hash, g[0].meta.seed))
        .collect::<Vec<_>>()
        .join("; ")
}

fn print_reports(reports: &[TestReport]) {
    for r in reports {
        println!(
            "{} {}: estimate={:.6e} stderr={:.3e} target={:.6e} z={:.3}{}",
            if r.pass { "PASS" } else { "FAIL" },
            r.test,
            r.estimate,
            r.stderr,
            r.target,
            r.z,
            if r.note.is_empty() {
                String::new()
            } else {
                format!(" ({})", r.note)
            }
        );
    }
}

fn compare(args: CompareArgs) -> Result<bool> {
    let spde = read_records(&args.spde)?;
    let mut groups = Vec::new();
    for dir in &args.particles {
        let records = read_records(dir)?;
        let Some(n) = records.first().and_then(|r| r.meta.n) else {
            bail!("{} holds no particle records", dir.display());
        };
        groups.push((n, records));
    }
    let view: Vec<(usize, &[PathRecord])> = groups.iter().map(|(n, r)| (*n, r.as_slice())).collect();
    let outcome = convergence_test(&view, &spde, args.t, args.bootstrap, args.seed)?;
    let mut all = vec![spde];
    all.extend(groups.into_iter().map(|(_, r)| r));
    let provenance = provenance(&all);
    write_rho_csv(&outcome.points, &provenance, BufWriter::new(File::create(&args.out)?))?;
    if let Some(path) = &args.report {
        write_report_csv(&outcome.reports, &provenance, BufWriter::new(File::create(path)?))?;
    }
    print_reports(&outcome.reports);
    Ok(outcome.reports.iter().all(|r| r.pass))
}
