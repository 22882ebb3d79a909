use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,lr,train_loss,train_acc,test_acc,seconds";

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when the test split was not evaluated.
    pub test_acc: f64,
    pub seconds: f64,
}

/// Append-only per-epoch log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    rows: Vec<EpochMetrics>,
}

impl MetricsLog {
    pub fn push(&mut self, row: EpochMetrics) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::Contract(format!(
                    "epoch {} logged after epoch {}",
                    row.epoch, last.epoch
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[EpochMetrics] {
        &self.rows
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                r.epoch, r.lr, r.train_loss, r.train_acc, r.test_acc, r.seconds
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(METRICS_HEADER) {
            return Err(Error::format(
                "header",
                format!("expected {METRICS_HEADER:?}"),
            ));
        }
        let mut log = Self::default();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
                    Error::format(format!("metrics row {}", n + 1), format!("column {i}"))
                })
            };
            log.push(EpochMetrics {
                epoch: num(0)? as usize,
                lr: num(1)?,
                train_loss: num(2)?,
                train_acc: num(3)?,
                test_acc: num(4)?,
                seconds: num(5)?,
            })?;
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize) -> EpochMetrics {
        EpochMetrics {
            epoch,
            lr: 1e-4,
            train_loss: 1.25,
            train_acc: 0.5,
            test_acc: f64::NAN,
            seconds: 0.5,
        }
    }

    #[test]
    fn epochs_must_increase() {
        let mut log = MetricsLog::default();
        log.push(row(0)).unwrap();
        assert!(log.push(row(0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut log = MetricsLog::default();
        log.push(row(0)).unwrap();
        log.push(row(1)).unwrap();
        let back = MetricsLog::parse_csv(&log.to_csv()).unwrap();
        assert_eq!(back.rows().len(), 2);
        assert_eq!(back.rows()[1].lr, 1e-4);
        assert!(back.rows()[1].test_acc.is_nan());
        assert_eq!(
            MetricsLog::default().to_csv(),
            format!("{METRICS_HEADER}\n")
        );
    }
}
