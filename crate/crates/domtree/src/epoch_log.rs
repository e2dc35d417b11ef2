//! Per-epoch training curves as CSV.

use std::io::{Read, Write};
use std::path::Path;

use domtree_core::{ClassLabel, EpochLog, NUM_CLASSES};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected log header {0:?}")]
    Header(Vec<String>),
}

/// `epoch, train_loss, val_loss, f1_<class>...` in class-index order.
pub fn header() -> Vec<String> {
    let mut h = vec!["epoch".to_owned(), "train_loss".to_owned(), "val_loss".to_owned()];
    h.extend(ClassLabel::ALL.iter().map(|c| format!("f1_{}", c.name())));
    h
}

/// One parsed log row.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub f1: [f64; NUM_CLASSES],
}

impl From<&EpochLog> for LogRow {
    fn from(e: &EpochLog) -> Self {
        Self {
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
            f1: e.val_metrics.per_class.map(|c| c.f1),
        }
    }
}

/// Floats use the shortest representation that reads back exactly.
pub fn write_log<W: Write>(out: W, log: &[EpochLog]) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    for e in log {
        let row = LogRow::from(e);
        let mut record = vec![row.epoch.to_string(), row.train_loss.to_string(), row.val_loss.to_string()];
        record.extend(row.f1.iter().map(f64::to_string));
        w.write_record(record)?;
    }
    w.flush().map_err(|e| LogError::Csv(e.into()))?;
    Ok(())
}

pub fn write_log_file(path: &Path, log: &[EpochLog]) -> Result<(), LogError> {
    let file = std::fs::File::create(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_log(std::io::BufWriter::new(file), log)
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogRow>, LogError> {
    let mut r = csv::Reader::from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if found != header() {
        return Err(LogError::Header(found));
    }
    r.deserialize::<(usize, f64, f64, [f64; NUM_CLASSES])>()
        .map(|row| {
            let (epoch, train_loss, val_loss, f1) = row?;
            Ok(LogRow {
                epoch,
                train_loss,
                val_loss,
                f1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use domtree_core::metrics::evaluate_predictions;

    #[test]
    fn rows_read_back_exactly() {
        let metrics = evaluate_predictions(&[(ClassLabel::Name, ClassLabel::Name), (ClassLabel::Price, ClassLabel::Name)], Some(0.5));
        let log = vec![
            EpochLog {
                epoch: 1,
                train_loss: 0.1 + 0.2,
                val_loss: 1.0 / 3.0,
                val_metrics: metrics.clone(),
            },
            EpochLog {
                epoch: 2,
                train_loss: 1e-300,
                val_loss: 2.5,
                val_metrics: metrics,
            },
        ];
        let mut buf = Vec::new();
        write_log(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss,f1_negative,"), "{text}");
        let rows = read_log(buf.as_slice()).unwrap();
        assert_eq!(rows, log.iter().map(LogRow::from).collect::<Vec<_>>());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let err = read_log("a,b\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LogError::Header(_)));
    }
}
