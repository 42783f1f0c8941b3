//! Training history as CSV: `t,sigma,epsilon,loss,diagnosis`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::csv::CsvError;
use crate::trainer::{Diagnosis, HistoryRow};

pub const TRACE_HEADER: [&str; 5] = ["t", "sigma", "epsilon", "loss", "diagnosis"];

pub fn write_schedule_trace<W: std::io::Write>(writer: W, history: &[HistoryRow]) -> Result<()> {
    let mut wtr = ::csv::Writer::from_writer(writer);
    let io_err = |e: ::csv::Error| std::io::Error::other(e.to_string());
    wtr.write_record(TRACE_HEADER).map_err(io_err)?;
    for row in history {
        wtr.write_record([
            row.t.to_string(),
            row.sigma.to_string(),
            row.epsilon.to_string(),
            row.loss.to_string(),
            row.diagnosis.as_str().to_string(),
        ])
        .map_err(io_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn emit_schedule_trace(history: &[HistoryRow], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_schedule_trace(std::io::BufWriter::new(file), history)
}

pub fn read_schedule_trace<R: std::io::Read>(reader: R) -> Result<Vec<HistoryRow>> {
    let mut rdr = ::csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| std::io::Error::other(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| -> Error {
            CsvError::Parse {
                line,
                message: format!("bad {what}"),
            }
            .into()
        };
        if record.len() != TRACE_HEADER.len() {
            return Err(bad("field count"));
        }
        rows.push(HistoryRow {
            t: record[0].parse().map_err(|_| bad("t"))?,
            sigma: record[1].parse().map_err(|_| bad("sigma"))?,
            epsilon: record[2].parse().map_err(|_| bad("epsilon"))?,
            loss: record[3].parse().map_err(|_| bad("loss"))?,
            diagnosis: Diagnosis::parse(&record[4]).ok_or_else(|| bad("diagnosis"))?,
        });
    }
    Ok(rows)
}
