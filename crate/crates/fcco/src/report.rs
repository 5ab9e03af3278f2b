//! `fcco report`: samples-to-threshold tables from trace CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fcco_core::solver::TraceRecord;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::experiment::median;
use crate::output::read_trace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Loss,
    GradNorm,
    UErr,
    ZErr,
}

impl Column {
    pub fn get(self, r: &TraceRecord) -> f64 {
        match self {
            Column::Loss => r.loss,
            Column::GradNorm => r.grad_norm,
            Column::UErr => r.u_err,
            Column::ZErr => r.z_err,
        }
    }
}

/// Samples drawn when `column` first drops to `threshold` or below.
pub fn samples_to_threshold(trace: &[TraceRecord], column: Column, threshold: f64) -> Option<u64> {
    trace.iter().find(|r| column.get(r) <= threshold).map(|r| r.samples)
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub runs: usize,
    pub reached: usize,
    /// Runs that never reach the threshold count as infinite.
    pub median_samples: Option<f64>,
    pub per_run: Vec<(PathBuf, Option<u64>)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub column: Column,
    pub threshold: f64,
    pub groups: Vec<GroupRow>,
}

/// `name_seed7.csv` belongs to group `name`.
fn group_of(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match stem.rsplit_once("_seed") {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head.to_string(),
        _ => stem,
    }
}

fn collect_csvs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| HarnessError::io(dir, err)))
        .collect::<Result<_>>()?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect_csvs(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.push(p);
        }
    }
    Ok(())
}

pub fn build_report(dir: &Path, column: Column, threshold: f64) -> Result<Report> {
    let mut files = Vec::new();
    collect_csvs(dir, &mut files)?;
    if files.is_empty() {
        return Err(HarnessError::Config(format!("no CSV files under {}", dir.display())));
    }
    let mut groups: BTreeMap<String, Vec<(PathBuf, Option<u64>)>> = BTreeMap::new();
    for f in files {
        let trace = read_trace(&f)?;
        let hit = samples_to_threshold(&trace, column, threshold);
        let rel = f.strip_prefix(dir).unwrap_or(&f).to_path_buf();
        let key = match rel.parent() {
            Some(p) if !p.as_os_str().is_empty() => format!("{}/{}", p.display(), group_of(&f)),
            _ => group_of(&f),
        };
        groups.entry(key).or_default().push((rel, hit));
    }
    let groups = groups
        .into_iter()
        .map(|(group, per_run)| {
            let xs: Vec<f64> = per_run.iter().map(|(_, s)| s.map_or(f64::INFINITY, |v| v as f64)).collect();
            let med = median(&xs);
            GroupRow {
                group,
                runs: per_run.len(),
                reached: per_run.iter().filter(|(_, s)| s.is_some()).count(),
                median_samples: med.is_finite().then_some(med),
                per_run,
            }
        })
        .collect();
    Ok(Report {
        column,
        threshold,
        groups,
    })
}

pub fn render(report: &Report) -> String {
    let mut s = format!("{:<32} {:>5} {:>8} {:>16}\n", "group", "runs", "reached", "median samples");
    for g in &report.groups {
        let med = g.median_samples.map_or("-".to_string(), |m| format!("{m:.0}"));
        s.push_str(&format!("{:<32} {:>5} {:>8} {:>16}\n", g.group, g.runs, g.reached, med));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping() {
        assert_eq!(group_of(Path::new("msvr-v2_seed12.csv")), "msvr-v2");
        assert_eq!(group_of(Path::new("a0.5_b0.1_seed3.csv")), "a0.5_b0.1");
        assert_eq!(group_of(Path::new("custom.csv")), "custom");
        assert_eq!(group_of(Path::new("x_seedy.csv")), "x_seedy");
    }

    #[test]
    fn threshold_crossing() {
        let rows: Vec<TraceRecord> = [(0, 2.0), (10, 1.0), (20, 0.5)]
            .iter()
            .map(|&(s, l)| TraceRecord { iter: 0, samples: s, loss: l, grad_norm: 0.0, u_err: 0.0, z_err: 0.0, wall_ns: 0 })
            .collect();
        assert_eq!(samples_to_threshold(&rows, Column::Loss, 1.0), Some(10));
        assert_eq!(samples_to_threshold(&rows, Column::Loss, 0.1), None);
    }
}
