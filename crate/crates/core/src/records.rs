//! Records, record files, and the flattened global index.
//!
//! Files are numbered in arrival order. Record `(m, i)` means row `i` of file
//! `m`; both are 0-based internally and 1-based in every serialized form.
//! The global index flattens `(m, i)` to `n_1 + ... + n_{m-1} + i`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{FieldKind, FieldSchema};

/// One field value. Categorical values are stored as text; numeric fields
/// hold a finite f64. Missing values are rejected at ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Text(String),
    Number(f64),
}

impl FieldValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            FieldValue::Number(_) => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            FieldValue::Number(x) => Some(*x),
            FieldValue::Text(_) => None,
        }
    }
}

/// A single record: one value per schema field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub values: Vec<FieldValue>,
}

/// A duplicate-free file of records over a common schema.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub records: Vec<Record>,
}

impl RecordFile {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file has no records")]
    EmptyFile,
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, field `{field}`: missing value")]
    MissingValue { row: usize, field: String },
    #[error("row {row}, field `{field}`: `{value}` is not a finite number")]
    BadNumber {
        row: usize,
        field: String,
        value: String,
    },
    #[error("header does not match schema: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-file record counts `n_1..n_k` with cumulative-sum helpers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSizes(pub Vec<usize>);

impl FileSizes {
    pub fn file_count(&self) -> usize {
        self.0.len()
    }

    pub fn size(&self, file: usize) -> usize {
        self.0[file]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Number of records in files strictly before `file` (0-based).
    pub fn before(&self, file: usize) -> usize {
        self.0[..file].iter().sum()
    }

    /// Global index (0-based) of record `(file, row)`.
    pub fn global(&self, file: usize, row: usize) -> GlobalIndex {
        debug_assert!(row < self.0[file]);
        GlobalIndex(self.before(file) + row)
    }

    /// Inverse of [`FileSizes::global`].
    pub fn file_row(&self, g: GlobalIndex) -> (usize, usize) {
        let mut rest = g.0;
        for (file, &n) in self.0.iter().enumerate() {
            if rest < n {
                return (file, rest);
            }
            rest -= n;
        }
        panic!("global index {} out of range", g.0);
    }
}

/// Flattened record index, 0-based internally. Serialized forms add 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GlobalIndex(pub usize);

impl GlobalIndex {
    /// 1-based value used in every external representation.
    pub fn external(self) -> usize {
        self.0 + 1
    }

    pub fn from_external(v: usize) -> Self {
        assert!(v >= 1, "external indices are 1-based");
        GlobalIndex(v - 1)
    }
}

/// A schema plus the files ingested so far, in arrival order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub schema: FieldSchema,
    pub files: Vec<RecordFile>,
}

impl Corpus {
    pub fn new(schema: FieldSchema) -> Self {
        Corpus {
            schema,
            files: Vec::new(),
        }
    }

    pub fn sizes(&self) -> FileSizes {
        FileSizes(self.files.iter().map(|f| f.len()).collect())
    }

    pub fn push_file(&mut self, file: RecordFile) -> Result<(), IngestError> {
        if file.is_empty() {
            return Err(IngestError::EmptyFile);
        }
        for (row, r) in file.records.iter().enumerate() {
            if r.values.len() != self.schema.field_count() {
                return Err(IngestError::FieldCount {
                    row: row + 1,
                    expected: self.schema.field_count(),
                    found: r.values.len(),
                });
            }
        }
        self.files.push(file);
        Ok(())
    }

    pub fn record(&self, file: usize, row: usize) -> &Record {
        &self.files[file].records[row]
    }

    pub fn record_global(&self, g: GlobalIndex) -> &Record {
        let (file, row) = self.sizes().file_row(g);
        self.record(file, row)
    }
}

/// Parses one CSV file of records against the schema. The header row must
/// list the schema's field names in order; cells must be non-empty; numeric
/// fields must parse to finite numbers.
pub fn read_record_csv<R: Read>(schema: &FieldSchema, reader: R) -> Result<RecordFile, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let expected: Vec<String> = schema.fields().iter().map(|f| f.name.clone()).collect();
    let found: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if found != expected {
        return Err(IngestError::HeaderMismatch { expected, found });
    }
    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let rownum = idx + 1;
        if row.len() != schema.field_count() {
            return Err(IngestError::FieldCount {
                row: rownum,
                expected: schema.field_count(),
                found: row.len(),
            });
        }
        let mut values = Vec::with_capacity(schema.field_count());
        for (f, cell) in row.iter().enumerate() {
            let fd = &schema.fields()[f];
            if cell.is_empty() {
                return Err(IngestError::MissingValue {
                    row: rownum,
                    field: fd.name.clone(),
                });
            }
            let value = match fd.kind {
                FieldKind::Numeric { .. } => {
                    let x: f64 = cell.parse().map_err(|_| IngestError::BadNumber {
                        row: rownum,
                        field: fd.name.clone(),
                        value: cell.to_string(),
                    })?;
                    if !x.is_finite() {
                        return Err(IngestError::BadNumber {
                            row: rownum,
                            field: fd.name.clone(),
                            value: cell.to_string(),
                        });
                    }
                    FieldValue::Number(x)
                }
                _ => FieldValue::Text(cell.to_string()),
            };
            values.push(value);
        }
        records.push(Record { values });
    }
    if records.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(RecordFile { records })
}

pub fn read_record_csv_path(
    schema: &FieldSchema,
    path: &Path,
) -> Result<RecordFile, IngestError> {
    let file = std::fs::File::open(path)?;
    read_record_csv(schema, file)
}

/// Writes a record file as CSV (header row, RFC 4180 quoting).
pub fn write_record_csv<W: Write>(
    schema: &FieldSchema,
    file: &RecordFile,
    writer: W,
) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(schema.fields().iter().map(|f| f.name.as_str()))?;
    for r in &file.records {
        let cells: Vec<String> = r
            .values
            .iter()
            .map(|v| match v {
                FieldValue::Text(s) => s.clone(),
                FieldValue::Number(x) => format_number(*x),
            })
            .collect();
        wtr.write_record(&cells)?;
    }
    wtr.flush()?;
    Ok(())
}

fn format_number(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FieldDef;

    fn schema() -> FieldSchema {
        FieldSchema::new(vec![
            FieldDef::text("name"),
            FieldDef::categorical("occ"),
            FieldDef::numeric("age", vec![1.0, 4.0]),
        ])
        .unwrap()
    }

    #[test]
    fn global_index_round_trips() {
        let sizes = FileSizes(vec![3, 2, 4]);
        for file in 0..3 {
            for row in 0..sizes.size(file) {
                let g = sizes.global(file, row);
                assert_eq!(sizes.file_row(g), (file, row));
            }
        }
        assert_eq!(sizes.global(1, 0).external(), 4);
        assert_eq!(GlobalIndex::from_external(4), GlobalIndex(3));
    }

    #[test]
    fn csv_round_trip() {
        let schema = schema();
        let file = RecordFile {
            records: vec![
                Record {
                    values: vec![
                        FieldValue::Text("maddison, r".into()),
                        FieldValue::Text("f".into()),
                        FieldValue::Number(31.0),
                    ],
                },
                Record {
                    values: vec![
                        FieldValue::Text("samara".into()),
                        FieldValue::Text("d".into()),
                        FieldValue::Number(22.5),
                    ],
                },
            ],
        };
        let mut buf = Vec::new();
        write_record_csv(&schema, &file, &mut buf).unwrap();
        let back = read_record_csv(&schema, buf.as_slice()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn rejects_missing_and_nonfinite() {
        let schema = schema();
        let missing = "name,occ,age\nann,,3\n";
        assert!(matches!(
            read_record_csv(&schema, missing.as_bytes()),
            Err(IngestError::MissingValue { .. })
        ));
        let bad = "name,occ,age\nann,f,inf\n";
        assert!(matches!(
            read_record_csv(&schema, bad.as_bytes()),
            Err(IngestError::BadNumber { .. })
        ));
        let nan = "name,occ,age\nann,f,NaN\n";
        assert!(matches!(
            read_record_csv(&schema, nan.as_bytes()),
            Err(IngestError::BadNumber { .. })
        ));
    }

    #[test]
    fn rejects_header_mismatch_and_empty() {
        let schema = schema();
        let wrong = "name,age,occ\nann,3,f\n";
        assert!(matches!(
            read_record_csv(&schema, wrong.as_bytes()),
            Err(IngestError::HeaderMismatch { .. })
        ));
        let empty = "name,occ,age\n";
        assert!(matches!(
            read_record_csv(&schema, empty.as_bytes()),
            Err(IngestError::EmptyFile)
        ));
    }

    #[test]
    fn corpus_rejects_wrong_arity() {
        let mut corpus = Corpus::new(schema());
        let bad = RecordFile {
            records: vec![Record {
                values: vec![FieldValue::Text("x".into())],
            }],
        };
        assert!(matches!(
            corpus.push_file(bad),
            Err(IngestError::FieldCount { .. })
        ));
    }
}
