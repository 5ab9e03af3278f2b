//! AUC task data as CSV: `task,label,x0,x1,...`, label `1` or `-1`.

use std::path::Path;

use fcco_core::problem::AucTask;

use crate::error::{HarnessError, Result};
use crate::output::write_atomic;

pub fn tasks_csv(tasks: &[AucTask]) -> Result<Vec<u8>> {
    let dim = tasks.first().and_then(|t| t.positives.first()).map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| HarnessError::Config(format!("csv encoding: {e}"));
    let mut header = vec!["task".to_string(), "label".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(fail)?;
    for (i, t) in tasks.iter().enumerate() {
        for (label, rows) in [("1", &t.positives), ("-1", &t.negatives)] {
            for x in rows {
                let mut rec = vec![i.to_string(), label.to_string()];
                rec.extend(x.iter().map(|v| format!("{v:?}")));
                w.write_record(&rec).map_err(fail)?;
            }
        }
    }
    w.into_inner().map_err(|e| HarnessError::Config(format!("csv encoding: {e}")))
}

pub fn dump_tasks(path: &Path, tasks: &[AucTask]) -> Result<()> {
    write_atomic(path, &tasks_csv(tasks)?)
}

/// Task ids must be `0..m` with no gaps.
pub fn load_tasks(path: &Path) -> Result<Vec<AucTask>> {
    let bad = |message: String| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut tasks: Vec<AucTask> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = line + 2;
        if rec.len() < 3 {
            return Err(bad(format!("row {row}: need task, label and at least one feature")));
        }
        let task: usize = rec[0].trim().parse().map_err(|_| bad(format!("row {row}: bad task id `{}`", &rec[0])))?;
        let x = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("row {row}: bad feature `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if tasks.len() <= task {
            tasks.resize_with(task + 1, AucTask::default);
        }
        match rec[1].trim() {
            "1" | "+1" => tasks[task].positives.push(x),
            "-1" => tasks[task].negatives.push(x),
            other => return Err(bad(format!("row {row}: label must be 1 or -1, got `{other}`"))),
        }
    }
    if tasks.is_empty() {
        return Err(bad("no examples".into()));
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let tasks = vec![
            AucTask { positives: vec![vec![1.0, 0.1]], negatives: vec![vec![-1.0, 0.2], vec![0.0, 1e-9]] },
            AucTask { positives: vec![vec![3.0, -0.5]], negatives: vec![vec![0.5, 0.5]] },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.csv");
        dump_tasks(&path, &tasks).unwrap();
        assert_eq!(load_tasks(&path).unwrap(), tasks);
    }

    #[test]
    fn bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "task,label,x0\n0,2,1.0\n").unwrap();
        assert!(load_tasks(&path).is_err());
    }
}
