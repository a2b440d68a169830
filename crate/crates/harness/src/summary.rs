//! Regret statistics across replications.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use greybox_core::Trace;

use crate::error::{HarnessError, Result};
use crate::io;

/// Floor added to regret before taking logarithms.
pub const REGRET_FLOOR: f64 = 1e-12;
const COST_GRID: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    /// Evaluation count (1-based) or cumulative cost.
    pub at: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub method: String,
    pub replications: usize,
    /// `log10(regret + 1e-12)` against evaluation count.
    pub by_evaluation: Vec<CurvePoint>,
    /// `log10(regret + 1e-12)` against cumulative cost.
    pub by_cost: Vec<CurvePoint>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        a
    } else {
        a + (pos - lo as f64) * (b - a)
    }
}

fn stats(mut v: Vec<f64>) -> (f64, f64, f64) {
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.5), quantile(&v, 0.25), quantile(&v, 0.75))
}

pub fn log_regret(r: f64) -> f64 {
    (r + REGRET_FLOOR).log10()
}

/// Regret after `n` evaluations, carrying the last row forward.
fn regret_at_evaluation(t: &Trace, n: usize) -> f64 {
    t.rows
        .get(n.min(t.rows.len()).saturating_sub(1))
        .map_or(f64::INFINITY, |r| r.regret)
}

/// Regret of the last row whose cumulative cost is at most `c`.
fn regret_at_cost(t: &Trace, c: f64) -> f64 {
    t.rows
        .iter()
        .take_while(|r| r.cumulative_cost <= c)
        .last()
        .map_or(f64::INFINITY, |r| r.regret)
}

/// Median regret over replications after `n` evaluations.
pub fn median_regret_at_evaluation(traces: &[Trace], n: usize) -> f64 {
    stats(traces.iter().map(|t| regret_at_evaluation(t, n)).collect()).0
}

/// Median regret over replications at cumulative cost `c`.
pub fn median_regret_at_cost(traces: &[Trace], c: f64) -> f64 {
    stats(traces.iter().map(|t| regret_at_cost(t, c)).collect()).0
}

/// First evaluation count (1-based) at which the median regret is at most
/// `target`.
pub fn evaluations_to_target(traces: &[Trace], target: f64) -> Option<usize> {
    let n = traces.iter().map(Trace::len).max()?;
    (1..=n).find(|&i| median_regret_at_evaluation(traces, i) <= target)
}

/// Smallest cumulative cost at which the median regret is at most `target`.
pub fn cost_to_target(traces: &[Trace], target: f64) -> Option<f64> {
    let mut costs: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.rows.iter().map(|r| r.cumulative_cost))
        .collect();
    costs.sort_by(f64::total_cmp);
    costs.dedup();
    costs
        .into_iter()
        .find(|&c| median_regret_at_cost(traces, c) <= target)
}

pub fn summarize(method: &str, traces: &[Trace]) -> Result<Summary> {
    let traces: Vec<&Trace> = traces.iter().filter(|t| !t.is_empty()).collect();
    if traces.is_empty() {
        return Err(HarnessError::Runtime("no completed replications to summarize".into()));
    }
    let n = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let by_evaluation = (1..=n)
        .map(|i| {
            let (median, q25, q75) = stats(
                traces
                    .iter()
                    .map(|t| log_regret(regret_at_evaluation(t, i)))
                    .collect(),
            );
            CurvePoint {
                at: i as f64,
                median,
                q25,
                q75,
            }
        })
        .collect();
    let max_cost = traces.iter().map(|t| t.total_cost()).fold(0.0, f64::max);
    let by_cost = (1..=COST_GRID)
        .map(|g| {
            let c = max_cost * g as f64 / COST_GRID as f64;
            let (median, q25, q75) = stats(
                traces
                    .iter()
                    .map(|t| log_regret(regret_at_cost(t, c)))
                    .collect(),
            );
            CurvePoint {
                at: c,
                median,
                q25,
                q75,
            }
        })
        .collect();
    Ok(Summary {
        method: method.to_string(),
        replications: traces.len(),
        by_evaluation,
        by_cost,
    })
}

/// Loaded run directory: method name and completed traces.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
    pub method: String,
    pub traces: Vec<Trace>,
}

pub fn load_run_dir(dir: &Path) -> Result<RunDir> {
    let method = io::read_manifest_entries(&io::manifest_path(dir))?
        .into_iter()
        .find(|(k, _)| k == "method.name")
        .map(|(_, v)| v)
        .ok_or_else(|| HarnessError::Format {
            path: io::manifest_path(dir).display().to_string(),
            message: "no method.name".into(),
        })?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace-r") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    let traces = files.iter().map(|p| io::read_trace(p)).collect::<Result<Vec<_>>>()?;
    Ok(RunDir {
        path: dir.to_path_buf(),
        method,
        traces,
    })
}

/// A run directory, or every run directory directly below `dir`.
pub fn load_runs(dir: &Path) -> Result<Vec<RunDir>> {
    if io::manifest_path(dir).exists() {
        return Ok(vec![load_run_dir(dir)?]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| io::manifest_path(p).exists())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(HarnessError::Runtime(format!(
            "no run manifest in {} or its subdirectories",
            dir.display()
        )));
    }
    subdirs.iter().map(|p| load_run_dir(p)).collect()
}

/// Plot-ready CSV: one row per (method, axis, position).
pub fn summary_csv(summaries: &[Summary]) -> String {
    let mut s = String::from("method,axis,at,median_log10_regret,q25,q75,replications\n");
    for sm in summaries {
        for (axis, curve) in [("evaluations", &sm.by_evaluation), ("cost", &sm.by_cost)] {
            for p in curve.iter() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    sm.method, axis, p.at, p.median, p.q25, p.q75, sm.replications
                );
            }
        }
    }
    s
}
