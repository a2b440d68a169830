//! Trace CSV files and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use greybox_core::{Trace, TraceRow};

use crate::error::{HarnessError, Result};

pub const TRACE_HEADER: [&str; 10] = [
    "replication",
    "iteration",
    "x",
    "tag",
    "y",
    "best_so_far",
    "regret",
    "cumulative_cost",
    "acq_value",
    "wall_ms",
];

pub fn trace_file_name(replication: usize) -> String {
    format!("trace-r{replication:03}.csv")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Serializes a trace; floats use the shortest round-trip decimal form.
pub fn trace_to_csv(trace: &Trace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Runtime(e.to_string());
    w.write_record(TRACE_HEADER).map_err(err)?;
    for r in &trace.rows {
        let x = r.x.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            r.replication.to_string(),
            r.iteration.to_string(),
            x,
            r.tag.map_or(String::new(), |t| t.to_string()),
            r.y.to_string(),
            r.best_so_far.to_string(),
            r.regret.to_string(),
            r.cumulative_cost.to_string(),
            opt(r.acq_value),
            opt(r.wall_ms),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Runtime(e.to_string()))
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let bytes = trace_to_csv(trace)?;
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let bad = |message: String| HarnessError::Format {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let mut trace = Trace::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            field(j)
                .parse()
                .map_err(|_| bad(format!("row {}: bad `{}`", i + 1, TRACE_HEADER[j])))
        };
        let opt_num = |j: usize| -> Result<Option<f64>> {
            if field(j).is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        let int = |j: usize| -> Result<usize> {
            field(j)
                .parse()
                .map_err(|_| bad(format!("row {}: bad `{}`", i + 1, TRACE_HEADER[j])))
        };
        let x = if field(2).is_empty() {
            Vec::new()
        } else {
            field(2)
                .split(';')
                .map(|s| s.parse().map_err(|_| bad(format!("row {}: bad `x`", i + 1))))
                .collect::<Result<Vec<f64>>>()?
        };
        trace.rows.push(TraceRow {
            replication: int(0)?,
            iteration: int(1)?,
            x,
            tag: if field(3).is_empty() { None } else { Some(int(3)?) },
            y: num(4)?,
            best_so_far: num(5)?,
            regret: num(6)?,
            cumulative_cost: num(7)?,
            acq_value: opt_num(8)?,
            wall_ms: opt_num(9)?,
        });
    }
    Ok(trace)
}

/// Outcome of one replication as recorded in the manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    /// `None` when the replication completed.
    pub failure: Option<String>,
    /// Final fitted hyperparameters (log space), if a model was fitted.
    pub final_hyper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    /// Resolved config, as produced by `RunConfig::to_text`.
    pub config: String,
    pub version: String,
    pub design_size: usize,
    pub oracle_checksum: String,
    pub replications: Vec<ReplicationRecord>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# greybox-bo run manifest\n");
        s.push_str(&self.config);
        let _ = writeln!(s, "manifest.version = {}", self.version);
        let _ = writeln!(s, "manifest.design_size = {}", self.design_size);
        let _ = writeln!(s, "manifest.oracle_checksum = {}", self.oracle_checksum);
        for r in &self.replications {
            let p = format!("manifest.replication.{}", r.replication);
            let _ = writeln!(s, "{p}.seed = {}", r.seed);
            let status = match &r.failure {
                None => "ok".to_string(),
                Some(m) => format!("failed: {}", m.replace('\n', " ")),
            };
            let _ = writeln!(s, "{p}.status = {status}");
            let hyper = r.final_hyper.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
            let _ = writeln!(s, "{p}.final_hyper = {hyper}");
        }
        s
    }

    pub fn failed(&self) -> usize {
        self.replications.iter().filter(|r| r.failure.is_some()).count()
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.txt")
}

/// `manifest.*` values of a manifest file.
pub fn read_manifest_entries(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}
