//! Headerless CSV: one sample per line, comma-separated floats.

use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::error::Result;
use crate::model::{DataSet, DataSource};

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("CSV input has no rows")]
    Empty,
}

pub fn parse_csv<R: std::io::Read>(reader: R, origin: &str) -> Result<DataSet> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| CsvError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(CsvError::Ragged {
                line,
                expected,
                found: record.len(),
            }
            .into());
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| CsvError::Parse {
                line,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or(CsvError::Empty)?;
    let samples = Array2::from_shape_vec((rows, width), values).expect("row widths checked");
    DataSet::new(
        samples,
        DataSource {
            origin: origin.to_string(),
            normalization: "none".into(),
            item_shape: Vec::new(),
        },
    )
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DataSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_csv(std::io::BufReader::new(file), &path.display().to_string())
}

/// Writes every value with its shortest round-trip representation.
pub fn write_csv<W: std::io::Write>(writer: W, samples: &Array2<f64>) -> Result<()> {
    let mut wtr = ::csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in samples.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, data: &DataSet) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(file), data.samples())
}
