//! Per-epoch metrics traces (`epoch,val_accuracy,val_loss,learning_rate,momentum`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: &str = "epoch,val_accuracy,val_loss,learning_rate,momentum";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: u64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
    pub momentum: f64,
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{other:?}")),
        }
    } else {
        Error::Format(e.to_string())
    }
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(HEADER.split(',')).map_err(csv_err)?;
    }
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header.join(",") != HEADER {
        return Err(Error::Format(format!(
            "{}: unexpected header `{}`",
            path.display(),
            header.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// `Ok(())` when both traces have the same epochs and every value agrees
/// within `tolerance`; otherwise a description of the first difference.
pub fn compare_traces(a: &[TraceRow], b: &[TraceRow], tolerance: f64) -> std::result::Result<(), String> {
    if a.len() != b.len() {
        return Err(format!("traces have {} and {} rows", a.len(), b.len()));
    }
    for (x, y) in a.iter().zip(b) {
        if x.epoch != y.epoch {
            return Err(format!("epoch {} vs {}", x.epoch, y.epoch));
        }
        let fields = [
            ("val_accuracy", x.val_accuracy, y.val_accuracy),
            ("val_loss", x.val_loss, y.val_loss),
            ("learning_rate", x.learning_rate, y.learning_rate),
            ("momentum", x.momentum, y.momentum),
        ];
        for (name, u, v) in fields {
            if !((u - v).abs() <= tolerance) {
                return Err(format!("epoch {}: {name} {u} vs {v}", x.epoch));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: u64, acc: f64) -> TraceRow {
        TraceRow {
            epoch,
            val_accuracy: acc,
            val_loss: 1.0 / 3.0,
            learning_rate: 0.1,
            momentum: 0.9,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![row(1, 0.123456789012345), row(2, 0.9)];
        write_trace(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(HEADER));
        assert_eq!(read_trace(&path).unwrap(), rows);

        write_trace(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), HEADER);
        assert!(read_trace(&path).unwrap().is_empty());
    }

    #[test]
    fn comparison() {
        let a = vec![row(1, 0.5)];
        assert!(compare_traces(&a, &a, 1e-12).is_ok());
        assert!(compare_traces(&a, &[row(1, 0.5 + 1e-13)], 1e-12).is_ok());
        assert!(compare_traces(&a, &[row(1, 0.5 + 1e-9)], 1e-12).is_err());
        assert!(compare_traces(&a, &[], 1e-12).is_err());
        assert!(compare_traces(&a, &[row(2, 0.5)], 1e-12).is_err());
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));
    }
}
