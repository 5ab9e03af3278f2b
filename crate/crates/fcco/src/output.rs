//! Trace CSVs and JSON files. Every file is written to a temporary file in
//! the target directory and renamed into place.

use std::io::Write;
use std::path::Path;

use fcco_core::solver::TraceRecord;
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const CSV_HEADER: [&str; 7] = ["iter", "samples", "loss", "grad_norm", "u_err", "z_err", "wall_ns"];

/// Writes `bytes` to `path` atomically, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

pub fn trace_csv(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| HarnessError::Config(format!("csv encoding: {e}"));
    w.write_record(CSV_HEADER).map_err(fail)?;
    for r in trace {
        w.write_record(&[
            r.iter.to_string(),
            r.samples.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.grad_norm),
            fmt_f64(r.u_err),
            fmt_f64(r.z_err),
            r.wall_ns.to_string(),
        ])
        .map_err(fail)?;
    }
    w.into_inner().map_err(|e| HarnessError::Config(format!("csv encoding: {e}")))
}

/// Shortest representation that reads back to the same value.
fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:?}")
    }
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    write_atomic(path, &trace_csv(trace)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads a trace CSV, insisting on the exact header.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let bad = |message: String| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("header is `{}`, expected `{}`", header.iter().collect::<Vec<_>>().join(","), CSV_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |k: usize| -> Result<f64> { rec[k].parse().map_err(|_| bad(format!("bad number `{}`", &rec[k]))) };
        let u = |k: usize| -> Result<u64> { rec[k].parse().map_err(|_| bad(format!("bad integer `{}`", &rec[k]))) };
        out.push(TraceRecord {
            iter: u(0)?,
            samples: u(1)?,
            loss: f(2)?,
            grad_norm: f(3)?,
            u_err: f(4)?,
            z_err: f(5)?,
            wall_ns: u(6)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<TraceRecord> {
        vec![
            TraceRecord { iter: 0, samples: 80, loss: 1.5, grad_norm: 0.1, u_err: f64::NAN, z_err: 1e-300, wall_ns: 0 },
            TraceRecord { iter: 10, samples: 160, loss: 0.1 + 0.2, grad_norm: 3.0e10, u_err: 0.0, z_err: 2.0, wall_ns: 7 },
        ]
    }

    #[test]
    fn header_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.csv");
        write_trace(&path, &rows()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iter,samples,loss,grad_norm,u_err,z_err,wall_ns\n"));
        let back = read_trace(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].u_err.is_nan());
        assert_eq!(back[1].loss.to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back[0].z_err, 1e-300);
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "iter,samples,loss\n1,2,3\n").unwrap();
        assert!(read_trace(&path).is_err());
    }

    #[test]
    fn no_temp_files_left() {
        let dir = tempfile::tempdir().unwrap();
        write_json(&dir.path().join("s.json"), &serde_json::json!({"a": 1})).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("s.json")]);
    }
}
