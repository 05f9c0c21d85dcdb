//! CSV export and import of training curves and depth sweeps.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Metrics of one epoch, measured after that epoch's update. `train_loss`
/// comes from the training-mode pass that produced the update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub depth: usize,
    pub accuracy: f64,
    pub seconds: f64,
}

fn write_rows<W: Write, T: Serialize>(w: W, header: &[&str], rows: &[T]) -> Result<(), TrainError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R, header: &[&str]) -> Result<Vec<T>, TrainError> {
    let mut input = csv::Reader::from_reader(r);
    let found: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(TrainError::Format(format!("expected CSV header {}, found {}", header.join(","), found.join(","))));
    }
    input.deserialize().map(|row| row.map_err(TrainError::from)).collect()
}

pub const METRICS_HEADER: [&str; 5] = ["epoch", "train_loss", "train_acc", "val_acc", "test_acc"];
pub const SWEEP_HEADER: [&str; 4] = ["model", "depth", "accuracy", "seconds"];

pub fn write_metrics<W: Write>(w: W, records: &[EpochRecord]) -> Result<(), TrainError> {
    write_rows(w, &METRICS_HEADER, records)
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<EpochRecord>, TrainError> {
    read_rows(r, &METRICS_HEADER)
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), TrainError> {
    write_rows(w, &SWEEP_HEADER, rows)
}

pub fn read_sweep<R: Read>(r: R) -> Result<Vec<SweepRow>, TrainError> {
    read_rows(r, &SWEEP_HEADER)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip() {
        let rows = vec![
            EpochRecord { epoch: 1, train_loss: 1.25, train_acc: 0.5, val_acc: 0.4, test_acc: 0.3 },
            EpochRecord { epoch: 2, train_loss: 0.1 + 0.2, train_acc: 1.0, val_acc: 0.0, test_acc: 1.0 / 3.0 },
        ];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("epoch,train_loss,train_acc,val_acc,test_acc\n1,1.25,0.5,0.4,0.3\n"));
        assert_eq!(read_metrics(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn empty_files_keep_the_header() {
        let mut buf = Vec::new();
        write_sweep(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "model,depth,accuracy,seconds\n");
        assert!(read_metrics("model,depth,accuracy,seconds\n".as_bytes()).is_err());
    }
}
