//! On-disk formats.
//!
//! * `records/replica_NNNNN.ndjson`: a `header` line (config hash, seed,
//!   record metadata), one `step` line per recorded row and a closing
//!   `summary` line.
//! * `summary.csv`: replica statistics per recorded time, colony,
//!   observable and quantity.
//! * `cdf_c{colony}_t{time}.csv`: replica-mean snapshot distribution
//!   functions with standard errors.
//! * report CSV: `test,statistic,estimate,stderr,target,z,pass`.
//! * rho trend CSV: `n,colony,rho,stderr`.
//!
//! Every CSV opens with a `# config_hash=… seed=…` comment line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{summarize, RhoPoint, TestReport};
use crate::record::{PathRecord, RecordMeta, RecordSummary, StepRow};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header {
        config_hash: String,
        seed: u64,
        meta: RecordMeta,
    },
    Step(StepRow),
    Summary(RecordSummary),
}

pub fn write_record<W: Write>(record: &PathRecord, mut w: W) -> std::io::Result<()> {
    let header = Line::Header {
        config_hash: record.meta.config_hash.clone(),
        seed: record.meta.seed,
        meta: record.meta.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for row in &record.rows {
        serde_json::to_writer(&mut w, &Line::Step(row.clone()))?;
        writeln!(w)?;
    }
    serde_json::to_writer(&mut w, &Line::Summary(record.summary.clone()))?;
    writeln!(w)?;
    w.flush()
}

pub fn read_record(path: &Path) -> Result<PathRecord, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut meta = None;
    let mut rows = Vec::new();
    let mut summary = None;
    let bad = |line: usize, message: String| IoError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?;
        match parsed {
            Line::Header { meta: m, .. } if meta.is_none() && i == 0 => meta = Some(m),
            Line::Header { .. } => return Err(bad(i + 1, "unexpected header".into())),
            Line::Step(row) => rows.push(row),
            Line::Summary(s) => summary = Some(s),
        }
    }
    Ok(PathRecord {
        meta: meta.ok_or_else(|| bad(1, "missing header".into()))?,
        rows,
        summary: summary.ok_or_else(|| bad(0, "missing summary line".into()))?,
    })
}

pub fn record_file_name(replica: u64) -> String {
    format!("replica_{replica:05}.ndjson")
}

/// Writes every record into `dir/records/`.
pub fn write_records(dir: &Path, records: &[PathRecord]) -> Result<(), IoError> {
    let sub = dir.join("records");
    std::fs::create_dir_all(&sub).map_err(io_err(&sub))?;
    for r in records {
        let path = sub.join(record_file_name(r.meta.replica));
        let file = File::create(&path).map_err(io_err(&path))?;
        write_record(r, BufWriter::new(file)).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Reads all `*.ndjson` records under `dir` (or `dir/records`), sorted by
/// replica.
pub fn read_records(dir: &Path) -> Result<Vec<PathRecord>, IoError> {
    let sub = dir.join("records");
    let root = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&root)
        .map_err(io_err(&root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    paths.sort();
    let mut out = paths.iter().map(|p| read_record(p)).collect::<Result<Vec<_>, _>>()?;
    out.sort_by_key(|r| r.meta.replica);
    Ok(out)
}

fn header_line<W: Write>(w: &mut W, hash: &str, seed: u64) -> std::io::Result<()> {
    writeln!(w, "# config_hash={hash} seed={seed}")
}

/// Replica statistics at every time recorded by all replicas.
pub fn write_summary_csv<W: Write>(records: &[PathRecord], mut w: W) -> Result<(), IoError> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    header_line(&mut w, &first.meta.config_hash, first.meta.seed).map_err(io_err(Path::new("summary")))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "t",
        "colony",
        "observable",
        "quantity",
        "mean",
        "var",
        "stderr",
        "replicas",
    ])?;
    for row in &first.rows {
        let rows: Vec<&StepRow> = records.iter().filter_map(|r| r.row_at_step(row.step)).collect();
        if rows.len() != records.len() {
            continue;
        }
        for (c, meta) in first.meta.colonies.iter().enumerate() {
            let mut emit = |label: &str, quantity: &str, xs: Vec<f64>| -> Result<(), csv::Error> {
                let s = summarize(&xs);
                out.write_record([
                    row.t.to_string(),
                    (c + 1).to_string(),
                    label.to_string(),
                    quantity.to_string(),
                    s.mean.to_string(),
                    s.var.to_string(),
                    s.se.to_string(),
                    s.n.to_string(),
                ])
            };
            emit("", "mass", rows.iter().map(|r| r.colonies[c].mass).collect())?;
            for (k, label) in meta.labels.iter().enumerate() {
                let pick = |f: fn(&crate::record::ObservableRow) -> f64| -> Vec<f64> {
                    rows.iter().map(|r| f(&r.colonies[c].observables[k])).collect()
                };
                emit(label, "value", pick(|o| o.value))?;
                emit(label, "residual", pick(|o| o.residual))?;
                emit(label, "realized_qv", pick(|o| o.realized_qv))?;
                emit(label, "finite_qv", pick(|o| o.finite_qv))?;
                emit(
                    label,
                    "limit_qv",
                    pick(|o| o.occupation_sq).into_iter().map(|x| x * meta.gamma).collect(),
                )?;
            }
        }
    }
    out.flush().map_err(io_err(Path::new("summary")))?;
    Ok(())
}

/// Mean snapshot distribution function of each stored `(step, colony)`,
/// one CSV per snapshot; returns the written paths.
pub fn write_snapshot_csvs(dir: &Path, records: &[PathRecord]) -> Result<Vec<PathBuf>, IoError> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let Some(grid) = first.meta.snapshot_grid else {
        return Ok(Vec::new());
    };
    let mut written = Vec::new();
    for snap in &first.summary.snapshots {
        let rows: Vec<&[f64]> = records
            .iter()
            .filter_map(|r| {
                r.summary
                    .snapshots
                    .iter()
                    .find(|s| s.step == snap.step && s.colony == snap.colony)
                    .map(|s| s.values.as_slice())
            })
            .collect();
        let path = dir.join(format!("cdf_c{}_t{}.csv", snap.colony + 1, snap.t));
        let mut file = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        header_line(&mut file, &first.meta.config_hash, first.meta.seed).map_err(io_err(&path))?;
        let mut out = csv::Writer::from_writer(file);
        out.write_record(["x", "mean", "stderr", "replicas"])?;
        for j in 0..grid.nodes_len() {
            let xs: Vec<f64> = rows.iter().map(|v| v[j]).collect();
            let s = summarize(&xs);
            out.write_record([
                grid.node(j).to_string(),
                s.mean.to_string(),
                s.se.to_string(),
                s.n.to_string(),
            ])?;
        }
        out.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Report CSV; `provenance` goes into the header comment.
pub fn write_report_csv<W: Write>(reports: &[TestReport], provenance: &str, mut w: W) -> Result<(), IoError> {
    writeln!(w, "# {provenance}").map_err(io_err(Path::new("report")))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["test", "statistic", "estimate", "stderr", "target", "z", "pass"])?;
    for r in reports {
        out.write_record([
            r.test.clone(),
            r.statistic.clone(),
            r.estimate.to_string(),
            r.stderr.to_string(),
            r.target.to_string(),
            r.z.to_string(),
            r.pass.to_string(),
        ])?;
    }
    out.flush().map_err(io_err(Path::new("report")))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportRow {
    pub test: String,
    pub statistic: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub z: f64,
    pub pass: bool,
}

pub fn read_report_csv<R: std::io::Read>(r: R) -> Result<Vec<ReportRow>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_rho_csv<W: Write>(points: &[RhoPoint], provenance: &str, mut w: W) -> Result<(), IoError> {
    writeln!(w, "# {provenance}").map_err(io_err(Path::new("rho")))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "colony", "rho", "stderr"])?;
    for p in points {
        out.write_record([
            p.n.to_string(),
            (p.colony + 1).to_string(),
            p.rho.to_string(),
            p.stderr.to_string(),
        ])?;
    }
    out.flush().map_err(io_err(Path::new("rho")))?;
    Ok(())
}
