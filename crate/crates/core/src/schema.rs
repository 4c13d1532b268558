//! Field schemas.
//!
//! A schema lists the fields shared by every file in a corpus. Each field has
//! a comparison kind and a number of disagreement levels `L_f` beyond exact
//! equality, so a comparison of two records produces one level code in
//! `0..=L_f` per field. Level 0 always means exact equality. The total
//! indicator length is `P = sum_f (L_f + 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cutpoints for binned normalized edit distance: four levels
/// (equality plus three disagreement bins).
pub fn default_text_cutpoints() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

/// Comparison kind of a field, with any binning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// Text compared by normalized edit distance binned at `cutpoints`.
    /// Cutpoints are strictly increasing in (0, 1] and the last must be 1.0
    /// so every distance falls in some bin.
    Text {
        #[serde(default = "default_text_cutpoints")]
        cutpoints: Vec<f64>,
    },
    /// Categorical values compared in a binary fashion (equal / not equal).
    Categorical,
    /// Numbers compared by absolute difference binned at `bin_edges`; values
    /// beyond the last edge fall in one final open bin.
    Numeric { bin_edges: Vec<f64> },
}

impl FieldKind {
    /// Disagreement levels beyond exact equality.
    pub fn levels(&self) -> usize {
        match self {
            FieldKind::Text { cutpoints } => cutpoints.len(),
            FieldKind::Categorical => 1,
            FieldKind::Numeric { bin_edges } => bin_edges.len() + 1,
        }
    }
}

/// One named field of the common schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
}

impl FieldDef {
    pub fn text(name: &str) -> Self {
        FieldDef {
            name: name.to_string(),
            kind: FieldKind::Text {
                cutpoints: default_text_cutpoints(),
            },
        }
    }

    pub fn categorical(name: &str) -> Self {
        FieldDef {
            name: name.to_string(),
            kind: FieldKind::Categorical,
        }
    }

    pub fn numeric(name: &str, bin_edges: Vec<f64>) -> Self {
        FieldDef {
            name: name.to_string(),
            kind: FieldKind::Numeric { bin_edges },
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema must contain at least one field")]
    Empty,
    #[error("field `{0}`: cutpoints must be strictly increasing in (0, 1] and end at 1.0")]
    BadCutpoints(String),
    #[error("field `{0}`: bin edges must be finite, positive, and strictly increasing")]
    BadBinEdges(String),
    #[error("duplicate field name `{0}`")]
    DuplicateName(String),
}

/// An ordered, validated field list with precomputed level-block offsets.
///
/// The comparison indicator for a record pair is conceptually a `P`-vector of
/// binary indicators with exactly one 1 per field block of length `L_f + 1`;
/// this type owns the block layout used everywhere level codes are expanded
/// into that vector or counted into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FieldDef>", into = "Vec<FieldDef>")]
pub struct FieldSchema {
    fields: Vec<FieldDef>,
    offsets: Vec<usize>,
    total_levels: usize,
}

impl FieldSchema {
    pub fn new(fields: Vec<FieldDef>) -> Result<Self, SchemaError> {
        if fields.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for fd in &fields {
            if !seen.insert(fd.name.clone()) {
                return Err(SchemaError::DuplicateName(fd.name.clone()));
            }
            match &fd.kind {
                FieldKind::Text { cutpoints } => {
                    let increasing = cutpoints.windows(2).all(|w| w[0] < w[1]);
                    let in_range = cutpoints.iter().all(|c| *c > 0.0 && *c <= 1.0);
                    if cutpoints.is_empty()
                        || !increasing
                        || !in_range
                        || *cutpoints.last().unwrap() != 1.0
                    {
                        return Err(SchemaError::BadCutpoints(fd.name.clone()));
                    }
                }
                FieldKind::Numeric { bin_edges } => {
                    let increasing = bin_edges.windows(2).all(|w| w[0] < w[1]);
                    let ok = bin_edges.iter().all(|e| e.is_finite() && *e > 0.0);
                    if bin_edges.is_empty() || !increasing || !ok {
                        return Err(SchemaError::BadBinEdges(fd.name.clone()));
                    }
                }
                FieldKind::Categorical => {}
            }
        }
        let mut offsets = Vec::with_capacity(fields.len());
        let mut p = 0usize;
        for fd in &fields {
            offsets.push(p);
            p += fd.kind.levels() + 1;
        }
        Ok(FieldSchema {
            fields,
            offsets,
            total_levels: p,
        })
    }

    pub fn fields(&self) -> &[FieldDef] {
        &self.fields
    }

    /// Number of fields `F`.
    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    /// Total indicator length `P`.
    pub fn total_levels(&self) -> usize {
        self.total_levels
    }

    /// Levels beyond equality for field `f`.
    pub fn levels(&self, f: usize) -> usize {
        self.fields[f].kind.levels()
    }

    /// Offset of field `f`'s block in the `P`-vector.
    pub fn block_offset(&self, f: usize) -> usize {
        self.offsets[f]
    }

    /// Length of field `f`'s block (`L_f + 1`).
    pub fn block_len(&self, f: usize) -> usize {
        self.fields[f].kind.levels() + 1
    }

    /// Stable digest of the schema definition, used to tie persisted
    /// comparison matrices and sample stores to the schema that produced them.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(&self.fields).expect("schema serializes");
        let mut h = Sha256::new();
        h.update(&json);
        h.finalize().into()
    }
}

impl TryFrom<Vec<FieldDef>> for FieldSchema {
    type Error = SchemaError;
    fn try_from(fields: Vec<FieldDef>) -> Result<Self, Self::Error> {
        FieldSchema::new(fields)
    }
}

impl From<FieldSchema> for Vec<FieldDef> {
    fn from(s: FieldSchema) -> Self {
        s.fields
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_layout_sums_to_total() {
        let schema = FieldSchema::new(vec![
            FieldDef::text("given"),
            FieldDef::categorical("occ"),
            FieldDef::numeric("age", vec![1.0, 4.0]),
        ])
        .unwrap();
        assert_eq!(schema.field_count(), 3);
        // text: 3 cutpoints -> 4 slots; categorical -> 2; numeric 2 edges -> 4
        assert_eq!(schema.total_levels(), 4 + 2 + 4);
        assert_eq!(schema.block_offset(0), 0);
        assert_eq!(schema.block_offset(1), 4);
        assert_eq!(schema.block_offset(2), 6);
        let sum: usize = (0..3).map(|f| schema.block_len(f)).sum();
        assert_eq!(sum, schema.total_levels());
    }

    #[test]
    fn rejects_bad_cutpoints() {
        let bad = FieldSchema::new(vec![FieldDef {
            name: "x".into(),
            kind: FieldKind::Text {
                cutpoints: vec![0.5, 0.25, 1.0],
            },
        }]);
        assert!(matches!(bad, Err(SchemaError::BadCutpoints(_))));
        let no_one = FieldSchema::new(vec![FieldDef {
            name: "x".into(),
            kind: FieldKind::Text {
                cutpoints: vec![0.25, 0.5],
            },
        }]);
        assert!(matches!(no_one, Err(SchemaError::BadCutpoints(_))));
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert_eq!(FieldSchema::new(vec![]), Err(SchemaError::Empty));
        let dup = FieldSchema::new(vec![FieldDef::categorical("a"), FieldDef::categorical("a")]);
        assert!(matches!(dup, Err(SchemaError::DuplicateName(_))));
    }

    #[test]
    fn digest_tracks_definition() {
        let a = FieldSchema::new(vec![FieldDef::text("given")]).unwrap();
        let b = FieldSchema::new(vec![FieldDef::text("surname")]).unwrap();
        assert_ne!(a.digest(), b.digest());
        let a2 = FieldSchema::new(vec![FieldDef::text("given")]).unwrap();
        assert_eq!(a.digest(), a2.digest());
    }
}
