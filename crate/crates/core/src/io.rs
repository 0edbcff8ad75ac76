//! CSV data input and the JSON report document.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimators::DataMatrix;

/// Serializes a dense matrix as `{rows, cols, data}` with row-major `data`.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = m.transpose().as_slice().to_vec();
        Dense {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let dense = Dense::deserialize(d)?;
        if dense.rows * dense.cols != dense.data.len() {
            return Err(D::Error::custom(format!(
                "{}x{} matrix needs {} values, found {}",
                dense.rows,
                dense.cols,
                dense.rows * dense.cols,
                dense.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(dense.rows, dense.cols, &dense.data))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            header: false,
        }
    }
}

/// Parses numeric CSV text into a rectangular table, one record per row.
///
/// Line numbers in errors are 1-based and count the header; cell columns are 0-based.
pub fn parse_table<R: std::io::Read>(reader: R, options: CsvOptions) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                line,
                expected,
                found: record.len(),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::BadCell {
                        row: line,
                        col,
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let p = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), p, rows.into_iter().flatten()))
}

/// Parses CSV text into observations; the table must satisfy the data-matrix invariants.
pub fn parse_csv<R: std::io::Read>(reader: R, options: CsvOptions) -> Result<DataMatrix> {
    DataMatrix::new(parse_table(reader, options)?)
}

pub fn read_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<DataMatrix> {
    parse_csv(std::fs::File::open(path)?, options)
}

pub const SCHEMA_VERSION: &str = "1";

/// Envelope written by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: String,
    pub command: String,
    pub config: Value,
    pub results: Value,
    pub seed: Option<u64>,
    pub timestamps: BTreeMap<String, String>,
}

impl ReportDocument {
    pub fn new(command: &str, config: Value, results: Value, seed: Option<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            command: command.to_string(),
            config,
            results,
            seed,
            timestamps: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported schema version {:?}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Removes run-dependent keys (`timestamps`, `wall_clock_secs`) at any depth.
pub fn strip_volatile(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.remove("timestamps");
            map.remove("wall_clock_secs");
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}
