//! Field comparison levels and comparison matrices.
//!
//! Comparing two records yields one level code per field: 0 for exact
//! equality, higher codes for increasing disagreement. Text fields use
//! normalized edit distance binned at the schema's cutpoints, categorical
//! fields compare binary, numeric fields bin the absolute difference. A
//! comparison matrix holds the level codes for every (previous record, new
//! record) pair when a file arrives; the `P`-length binary indicator form is
//! a view derived on demand.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::records::{FieldValue, FileSizes, Record, RecordFile};
use crate::schema::{FieldKind, FieldSchema};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("field {field}: expected {expected} value kind, found {found}")]
    ValueKind {
        field: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("numeric comparison requires finite values")]
    NonFinite,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("container format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Edit distance over unicode scalar values (two-row dynamic program).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Level code for two text values: 0 iff equal, otherwise the edit distance
/// normalized by the longer length and binned at `cutpoints` (level `i + 1`
/// for the first cutpoint at or above the distance). Two empty strings are
/// equal by definition.
pub fn compare_text(a: &str, b: &str, cutpoints: &[f64]) -> u8 {
    if a == b {
        return 0;
    }
    let denom = a.chars().count().max(b.chars().count());
    let d = levenshtein(a, b) as f64 / denom as f64;
    for (i, c) in cutpoints.iter().enumerate() {
        if d <= *c {
            return (i + 1) as u8;
        }
    }
    cutpoints.len() as u8
}

/// Binary comparison: 0 if equal, 1 otherwise.
pub fn compare_categorical(a: &str, b: &str) -> u8 {
    u8::from(a != b)
}

/// Level code for two numbers: 0 iff equal, otherwise `|a - b|` binned at
/// `bin_edges`, with differences beyond the last edge in one final level.
pub fn compare_numeric(a: f64, b: f64, bin_edges: &[f64]) -> Result<u8, CompareError> {
    if !a.is_finite() || !b.is_finite() {
        return Err(CompareError::NonFinite);
    }
    if a == b {
        return Ok(0);
    }
    let d = (a - b).abs();
    for (i, e) in bin_edges.iter().enumerate() {
        if d <= *e {
            return Ok((i + 1) as u8);
        }
    }
    Ok((bin_edges.len() + 1) as u8)
}

/// Level codes for one record pair, one byte per field.
pub fn compare_records(
    schema: &FieldSchema,
    a: &Record,
    b: &Record,
) -> Result<Vec<u8>, CompareError> {
    let mut out = Vec::with_capacity(schema.field_count());
    for (f, fd) in schema.fields().iter().enumerate() {
        let code = match &fd.kind {
            FieldKind::Text { cutpoints } => {
                let (x, y) = both_text(f, &a.values[f], &b.values[f])?;
                compare_text(x, y, cutpoints)
            }
            FieldKind::Categorical => {
                let (x, y) = both_text(f, &a.values[f], &b.values[f])?;
                compare_categorical(x, y)
            }
            FieldKind::Numeric { bin_edges } => {
                let x = a.values[f].as_number().ok_or(CompareError::ValueKind {
                    field: f,
                    expected: "number",
                    found: "text",
                })?;
                let y = b.values[f].as_number().ok_or(CompareError::ValueKind {
                    field: f,
                    expected: "number",
                    found: "text",
                })?;
                compare_numeric(x, y, bin_edges)?
            }
        };
        out.push(code);
    }
    Ok(out)
}

fn both_text<'a>(
    field: usize,
    a: &'a FieldValue,
    b: &'a FieldValue,
) -> Result<(&'a str, &'a str), CompareError> {
    match (a.as_text(), b.as_text()) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(CompareError::ValueKind {
            field,
            expected: "text",
            found: "number",
        }),
    }
}

/// Expands per-field level codes into the `P`-length binary indicator vector
/// (exactly one 1 per field block).
pub fn expand_indicators(schema: &FieldSchema, codes: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; schema.total_levels()];
    for (f, &code) in codes.iter().enumerate() {
        out[schema.block_offset(f) + code as usize] = 1;
    }
    out
}

const MATRIX_MAGIC: &[u8; 4] = b"LSCM";
const MATRIX_VERSION: u16 = 1;

/// Level codes for all pairs between one new file and all previous records.
///
/// Pair `(g, j)` — previous record with global index `g`, new record row `j`
/// — lives at row `g * n_new + j`; each row is `F` bytes of level codes.
/// Matrices are immutable once built and persist to a binary container so
/// streaming updates never re-compare old file pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    schema_digest: [u8; 32],
    /// 1-based index of the file whose arrival produced this matrix.
    pub new_file: usize,
    pub n_prev: usize,
    pub n_new: usize,
    field_count: usize,
    codes: Vec<u8>,
}

impl ComparisonMatrix {
    /// Compares every record of `new_file` against every previous record.
    /// Rows follow the canonical (previous global index, new row) order.
    pub fn build(
        schema: &FieldSchema,
        previous: &[&RecordFile],
        new_file: &RecordFile,
    ) -> Result<Self, CompareError> {
        let n_prev: usize = previous.iter().map(|f| f.len()).sum();
        let n_new = new_file.len();
        let f = schema.field_count();
        let mut codes = vec![0u8; n_prev * n_new * f];
        let mut g = 0usize;
        for prev in previous {
            for rec in &prev.records {
                for (j, new_rec) in new_file.records.iter().enumerate() {
                    let pair = compare_records(schema, rec, new_rec)?;
                    let base = (g * n_new + j) * f;
                    codes[base..base + f].copy_from_slice(&pair);
                }
                g += 1;
            }
        }
        Ok(ComparisonMatrix {
            schema_digest: schema.digest(),
            new_file: previous.len() + 1,
            n_prev,
            n_new,
            field_count: f,
            codes,
        })
    }

    pub fn row_count(&self) -> usize {
        self.n_prev * self.n_new
    }

    pub fn schema_digest(&self) -> &[u8; 32] {
        &self.schema_digest
    }

    /// Level codes for the pair (previous global index `g`, new row `j`).
    #[inline]
    pub fn levels(&self, g: usize, j: usize) -> &[u8] {
        let base = (g * self.n_new + j) * self.field_count;
        &self.codes[base..base + self.field_count]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CompareError> {
        w.write_all(MATRIX_MAGIC)?;
        w.write_u16::<LittleEndian>(MATRIX_VERSION)?;
        w.write_all(&self.schema_digest)?;
        w.write_u32::<LittleEndian>(self.new_file as u32)?;
        w.write_u32::<LittleEndian>(self.n_prev as u32)?;
        w.write_u32::<LittleEndian>(self.n_new as u32)?;
        w.write_u16::<LittleEndian>(self.field_count as u16)?;
        w.write_all(&self.codes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CompareError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MATRIX_MAGIC {
            return Err(CompareError::Format("bad magic".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != MATRIX_VERSION {
            return Err(CompareError::Format(format!("unknown version {version}")));
        }
        let mut schema_digest = [0u8; 32];
        r.read_exact(&mut schema_digest)?;
        let new_file = r.read_u32::<LittleEndian>()? as usize;
        let n_prev = r.read_u32::<LittleEndian>()? as usize;
        let n_new = r.read_u32::<LittleEndian>()? as usize;
        let field_count = r.read_u16::<LittleEndian>()? as usize;
        let mut codes = vec![0u8; n_prev * n_new * field_count];
        r.read_exact(&mut codes)?;
        Ok(ComparisonMatrix {
            schema_digest,
            new_file,
            n_prev,
            n_new,
            field_count,
            codes,
        })
    }

    /// Debug export: one CSV row per pair with its level codes.
    pub fn write_csv<W: Write>(&self, schema: &FieldSchema, w: W) -> Result<(), CompareError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["prev_global".to_string(), "new_row".to_string()];
        header.extend(schema.fields().iter().map(|f| f.name.clone()));
        wtr.write_record(&header)
            .map_err(|e| CompareError::Format(e.to_string()))?;
        for g in 0..self.n_prev {
            for j in 0..self.n_new {
                let mut row = vec![(g + 1).to_string(), (j + 1).to_string()];
                row.extend(self.levels(g, j).iter().map(|c| c.to_string()));
                wtr.write_record(&row)
                    .map_err(|e| CompareError::Format(e.to_string()))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// The comparison matrices accumulated over a whole corpus, with the lookup
/// used by likelihood code: level codes for any cross-file record pair.
#[derive(Debug, Clone)]
pub struct ComparisonSet {
    sizes: FileSizes,
    matrices: Vec<ComparisonMatrix>,
}

impl ComparisonSet {
    /// Builds all matrices for the files ingested so far.
    pub fn build(schema: &FieldSchema, files: &[RecordFile]) -> Result<Self, CompareError> {
        assert!(files.len() >= 2, "need at least two files to compare");
        let mut matrices = Vec::with_capacity(files.len() - 1);
        for m in 1..files.len() {
            let previous: Vec<&RecordFile> = files[..m].iter().collect();
            matrices.push(ComparisonMatrix::build(schema, &previous, &files[m])?);
        }
        Ok(ComparisonSet {
            sizes: FileSizes(files.iter().map(|f| f.len()).collect()),
            matrices,
        })
    }

    /// Assembles a set from prebuilt matrices (e.g. loaded containers),
    /// checking shape consistency.
    pub fn from_matrices(
        sizes: FileSizes,
        matrices: Vec<ComparisonMatrix>,
    ) -> Result<Self, CompareError> {
        if matrices.len() + 1 != sizes.file_count() {
            return Err(CompareError::SchemaMismatch(format!(
                "expected {} matrices for {} files, found {}",
                sizes.file_count() - 1,
                sizes.file_count(),
                matrices.len()
            )));
        }
        for (v, m) in matrices.iter().enumerate() {
            let expect_prev = sizes.before(v + 1);
            let expect_new = sizes.size(v + 1);
            if m.n_prev != expect_prev || m.n_new != expect_new || m.new_file != v + 2 {
                return Err(CompareError::SchemaMismatch(format!(
                    "matrix {v} has shape {}x{}, expected {expect_prev}x{expect_new}",
                    m.n_prev, m.n_new
                )));
            }
        }
        Ok(ComparisonSet { sizes, matrices })
    }

    pub fn sizes(&self) -> &FileSizes {
        &self.sizes
    }

    pub fn file_count(&self) -> usize {
        self.sizes.file_count()
    }

    pub fn matrices(&self) -> &[ComparisonMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, v: usize) -> &ComparisonMatrix {
        &self.matrices[v]
    }

    /// Level codes for the pair (earlier record `g`, record `(file, row)`),
    /// where `file` is the 0-based later file and `g` its global index must
    /// precede that file.
    #[inline]
    pub fn pair_levels(&self, g: usize, later_file: usize, row: usize) -> &[u8] {
        debug_assert!(later_file >= 1 && g < self.sizes.before(later_file));
        self.matrices[later_file - 1].levels(g, row)
    }

    /// Per-slot totals over every pair covered by the matrices: slot
    /// `block_offset(f) + level` counts pairs whose field `f` compares at
    /// that level. Matched + unmatched tallies always sum to these totals.
    pub fn level_totals(&self, schema: &FieldSchema) -> Vec<u64> {
        let mut totals = vec![0u64; schema.total_levels()];
        for m in &self.matrices {
            for g in 0..m.n_prev {
                for j in 0..m.n_new {
                    for (f, &code) in m.levels(g, j).iter().enumerate() {
                        totals[schema.block_offset(f) + code as usize] += 1;
                    }
                }
            }
        }
        totals
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::Record;
    use crate::schema::FieldDef;

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("maddisom", "maddison"), 1);
    }

    #[test]
    fn text_levels() {
        let cuts = [0.25, 0.5, 1.0];
        assert_eq!(compare_text("ryan", "ryan", &cuts), 0);
        // one substitution over eight characters: 1/8 <= 0.25
        assert_eq!(compare_text("maddisom", "maddison", &cuts), 1);
        // full replacement: distance 1.0 -> last level
        assert_eq!(compare_text("abc", "xyz", &cuts), 3);
        // both empty counts as equal
        assert_eq!(compare_text("", "", &cuts), 0);
    }

    #[test]
    fn categorical_levels() {
        assert_eq!(compare_categorical("f", "f"), 0);
        assert_eq!(compare_categorical("f", "d"), 1);
        let domain = ["a", "b", "c", "d"];
        for x in domain {
            for y in domain {
                assert_eq!(compare_categorical(x, y), compare_categorical(y, x));
            }
        }
    }

    #[test]
    fn numeric_levels() {
        let edges = [1.0, 4.0];
        assert_eq!(compare_numeric(3.0, 3.0, &edges).unwrap(), 0);
        assert_eq!(compare_numeric(3.0, 5.0, &edges).unwrap(), 2);
        assert_eq!(compare_numeric(0.0, 100.0, &edges).unwrap(), 3);
        assert!(compare_numeric(f64::NAN, 1.0, &edges).is_err());
    }

    #[test]
    fn numeric_monotone_in_difference() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let edges = [0.5, 2.0, 7.5];
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..500 {
            let a: f64 = rng.random_range(-10.0..10.0);
            let d1: f64 = rng.random_range(0.0..10.0);
            let d2: f64 = rng.random_range(0.0..10.0);
            let (small, big) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let lo = compare_numeric(a, a + small, &edges).unwrap();
            let hi = compare_numeric(a, a + big, &edges).unwrap();
            assert!(lo <= hi);
        }
    }

    #[test]
    fn text_symmetry() {
        let cuts = [0.25, 0.5, 1.0];
        let words = ["ryan", "rya", "bryan", "", "maddisom"];
        for x in words {
            for y in words {
                assert_eq!(compare_text(x, y, &cuts), compare_text(y, x, &cuts));
            }
        }
    }

    fn tiny_schema() -> FieldSchema {
        FieldSchema::new(vec![FieldDef::text("name"), FieldDef::categorical("occ")]).unwrap()
    }

    fn rec(name: &str, occ: &str) -> Record {
        Record {
            values: vec![
                FieldValue::Text(name.into()),
                FieldValue::Text(occ.into()),
            ],
        }
    }

    #[test]
    fn matrix_shape_and_order() {
        let schema = tiny_schema();
        let f1 = RecordFile {
            records: vec![rec("ann", "a"), rec("bob", "b")],
        };
        let f2 = RecordFile {
            records: vec![rec("ann", "a"), rec("cat", "c"), rec("bob", "x")],
        };
        let m = ComparisonMatrix::build(&schema, &[&f1], &f2).unwrap();
        assert_eq!(m.row_count(), 6);
        assert_eq!(m.levels(0, 0), &[0, 0]); // ann/a vs ann/a
        assert_eq!(m.levels(1, 2), &[0, 1]); // bob/b vs bob/x
    }

    #[test]
    fn expanded_rows_have_one_indicator_per_field() {
        let schema = tiny_schema();
        let f1 = RecordFile {
            records: vec![rec("ann", "a"), rec("bo", "b")],
        };
        let f2 = RecordFile {
            records: vec![rec("ann", "c"), rec("xqz", "b")],
        };
        let m = ComparisonMatrix::build(&schema, &[&f1], &f2).unwrap();
        for g in 0..2 {
            for j in 0..2 {
                let bits = expand_indicators(&schema, m.levels(g, j));
                let total: u32 = bits.iter().map(|&b| b as u32).sum();
                assert_eq!(total as usize, schema.field_count());
                for f in 0..schema.field_count() {
                    let off = schema.block_offset(f);
                    let block: u32 = bits[off..off + schema.block_len(f)]
                        .iter()
                        .map(|&b| b as u32)
                        .sum();
                    assert_eq!(block, 1);
                }
            }
        }
    }

    #[test]
    fn container_round_trip() {
        let schema = tiny_schema();
        let f1 = RecordFile {
            records: vec![rec("ann", "a")],
        };
        let f2 = RecordFile {
            records: vec![rec("ann", "a"), rec("bob", "b")],
        };
        let m = ComparisonMatrix::build(&schema, &[&f1], &f2).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = ComparisonMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn set_covers_all_file_pairs() {
        let schema = tiny_schema();
        let files = vec![
            RecordFile {
                records: vec![rec("a", "x"), rec("b", "y")],
            },
            RecordFile {
                records: vec![rec("a", "x"), rec("c", "y"), rec("d", "z")],
            },
            RecordFile {
                records: vec![rec("b", "y")],
            },
        ];
        let set = ComparisonSet::build(&schema, &files).unwrap();
        assert_eq!(set.matrices().len(), 2);
        assert_eq!(set.matrix(0).row_count(), 6);
        assert_eq!(set.matrix(1).row_count(), 5);
        // totals count every pair once per field
        let totals = set.level_totals(&schema);
        let sum: u64 = totals.iter().sum();
        assert_eq!(sum as usize, (6 + 5) * schema.field_count());
        // pair (file1 row0 = global 0) vs (file3 row0): both "b"? no -- f1
        // row1 is "b"; check via pair_levels
        assert_eq!(set.pair_levels(1, 2, 0), &[0, 0]);
    }
}
