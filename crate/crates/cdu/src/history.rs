//! Training history as JSON lines.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use cdu_core::training::HistoryRecord;

use crate::error::{CliError, Result};

pub fn write(path: &Path, records: &[HistoryRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializable record");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(CliError::io(path))
}

pub fn append(path: &Path, records: &[HistoryRecord]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(CliError::io(path))?;
    for r in records {
        let line = serde_json::to_string(r).expect("serializable record");
        writeln!(f, "{line}").map_err(CliError::io(path))?;
    }
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<HistoryRecord>> {
    let f = std::fs::File::open(path).map_err(CliError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdu_core::nets::Role;

    fn record(iteration: usize) -> HistoryRecord {
        HistoryRecord {
            iteration,
            epoch: iteration * 2,
            role: Role::Dual,
            loss: 0.1 + iteration as f64,
            objective: -3.0,
            residual_mean: 1.0 / 3.0,
            residuals: vec![0.5, -0.25],
            mu: vec![0.0],
            nu: vec![1e-9, 2.0],
            val_violation: Some(0.7),
            saved: Some(true),
        }
    }

    #[test]
    fn write_then_append_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.jsonl");
        write(&p, &[record(0)]).unwrap();
        append(&p, &[record(1), record(2)]).unwrap();
        assert_eq!(read(&p).unwrap(), vec![record(0), record(1), record(2)]);
    }
}
