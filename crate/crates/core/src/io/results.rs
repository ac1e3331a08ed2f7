//! Result persistence: summary CSV, per-run epoch logs, config digest.
//!
//! Float columns are written with 17 significant digits so determinism is
//! checkable byte for byte (modulo the wall-time column).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::{RunRecord, RunStatus};
use crate::Real;

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub network_id: String,
    pub regularizer: String,
    pub omega: f64,
    pub seed: u64,
    pub status: String,
    pub best_val_acc: Option<Real>,
    pub test_acc: Option<Real>,
    pub epochs_trained: usize,
    pub wall_time_s: f64,
}

impl From<&RunRecord> for ResultRow {
    fn from(r: &RunRecord) -> Self {
        ResultRow {
            network_id: r.network_id.clone(),
            regularizer: r.regularizer.as_str().to_string(),
            omega: r.omega,
            seed: r.seed,
            status: match r.status {
                RunStatus::Completed => "completed".into(),
                RunStatus::Diverged => "diverged".into(),
            },
            best_val_acc: r.best_val_acc,
            test_acc: r.test_acc,
            epochs_trained: r.epochs_trained,
            wall_time_s: r.wall_time_s,
        }
    }
}

fn fmt_full(v: Real) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<Real>) -> String {
    v.map(fmt_full).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn log_file_name(r: &RunRecord) -> String {
    format!(
        "{}_{}_omega{}_seed{}.jsonl",
        r.network_id,
        r.regularizer.as_str(),
        r.omega,
        r.seed
    )
}

/// Writes `results.csv`, one JSON-lines epoch log per run under `logs/`, and
/// the experiment digest file.
pub fn write_results(records: &[RunRecord], out_dir: &Path, experiment_digest: &str) -> Result<()> {
    let logs_dir = out_dir.join("logs");
    fs::create_dir_all(&logs_dir).map_err(io_err(&logs_dir))?;

    let csv_path = out_dir.join("results.csv");
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| Error::Io {
        path: csv_path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    writer
        .write_record([
            "network_id",
            "regularizer",
            "omega",
            "seed",
            "status",
            "best_val_acc",
            "test_acc",
            "epochs_trained",
            "wall_time_s",
        ])
        .map_err(|e| csv_error(&csv_path, e))?;
    for r in records {
        let row = ResultRow::from(r);
        writer
            .write_record([
                row.network_id.as_str(),
                row.regularizer.as_str(),
                &row.omega.to_string(),
                &row.seed.to_string(),
                row.status.as_str(),
                &fmt_opt(row.best_val_acc),
                &fmt_opt(row.test_acc),
                &row.epochs_trained.to_string(),
                &fmt_full(row.wall_time_s),
            ])
            .map_err(|e| csv_error(&csv_path, e))?;
    }
    writer.flush().map_err(io_err(&csv_path))?;

    for r in records {
        let path = logs_dir.join(log_file_name(r));
        let mut lines = String::new();
        for e in &r.epoch_log {
            lines.push_str(&serde_json::to_string(e).expect("epoch log serializes"));
            lines.push('\n');
        }
        fs::write(&path, lines).map_err(io_err(&path))?;
    }

    let digest_path = out_dir.join("config_digest.txt");
    fs::write(&digest_path, format!("{experiment_digest}\n")).map_err(io_err(&digest_path))?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// Reads a `results.csv` back into rows.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::MalformedTable {
                path: path.display().to_string(),
                detail: format!("row {line}: missing column {i}"),
            })
        };
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::MalformedTable {
                path: path.display().to_string(),
                detail: format!("row {line}: bad {what} `{s}`"),
            })
        };
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s, what).map(Some)
            }
        };
        rows.push(ResultRow {
            network_id: field(0)?.to_string(),
            regularizer: field(1)?.to_string(),
            omega: parse_f64(field(2)?, "omega")?,
            seed: parse_f64(field(3)?, "seed")? as u64,
            status: field(4)?.to_string(),
            best_val_acc: opt(field(5)?, "best_val_acc")?,
            test_acc: opt(field(6)?, "test_acc")?,
            epochs_trained: parse_f64(field(7)?, "epochs_trained")? as usize,
            wall_time_s: parse_f64(field(8)?, "wall_time_s")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::RegKind;
    use crate::trainer::EpochLog;

    fn record(omega: f64, status: RunStatus) -> RunRecord {
        RunRecord {
            network_id: "net".into(),
            regularizer: RegKind::T1,
            omega,
            seed: 3,
            config_digest: "abc123".into(),
            status,
            epoch_log: vec![EpochLog {
                epoch: 1,
                train_loss: std::f64::consts::LN_2,
                reg_value: -0.25,
                val_acc: 0.875,
            }],
            epochs_trained: 1,
            best_epoch: Some(1),
            best_val_acc: (status == RunStatus::Completed).then_some(0.875),
            test_acc: (status == RunStatus::Completed).then_some(0.8125),
            final_test_acc: None,
            wall_time_s: 1.5,
            threads: 1,
            batch_trace: Vec::new(),
        }
    }

    #[test]
    fn round_trip_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![record(0.1, RunStatus::Completed), record(1.0, RunStatus::Completed)];
        write_results(&records, dir.path(), "digest-1").unwrap();
        let rows = read_results(&dir.path().join("results.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        for (row, rec) in rows.iter().zip(&records) {
            assert_eq!(row, &ResultRow::from(rec));
        }
        let digest = fs::read_to_string(dir.path().join("config_digest.txt")).unwrap();
        assert_eq!(digest.trim(), "digest-1");
        let log =
            fs::read_to_string(dir.path().join("logs").join("net_t1_omega0.1_seed3.jsonl"))
                .unwrap();
        assert!(log.contains("\"epoch\":1"));
        assert!(log.contains("\"val_acc\":0.875"));
    }

    #[test]
    fn diverged_rows_have_empty_accuracy_fields() {
        let dir = tempfile::tempdir().unwrap();
        write_results(&[record(100.0, RunStatus::Diverged)], dir.path(), "d").unwrap();
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let data_line = text.lines().nth(1).unwrap();
        assert!(data_line.contains("diverged,,,"));
        let rows = read_results(&dir.path().join("results.csv")).unwrap();
        assert_eq!(rows[0].best_val_acc, None);
        assert_eq!(rows[0].test_acc, None);
    }

    #[test]
    fn rewriting_identical_records_reproduces_the_csv_except_wall_time() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut a = record(0.5, RunStatus::Completed);
        let mut b = record(0.5, RunStatus::Completed);
        a.wall_time_s = 1.0;
        b.wall_time_s = 2.0;
        write_results(&[a], dir_a.path(), "x").unwrap();
        write_results(&[b], dir_b.path(), "x").unwrap();
        let strip = |p: &Path| -> Vec<String> {
            fs::read_to_string(p.join("results.csv"))
                .unwrap()
                .lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                .collect()
        };
        assert_eq!(strip(dir_a.path()), strip(dir_b.path()));
    }
}
