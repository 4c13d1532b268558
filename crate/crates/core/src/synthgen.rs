//! Synthetic longitudinal corpora with controlled overlap and noise.
//!
//! File 1 holds fresh entities; each later file duplicates an exact fraction
//! of its rows from entities seen in any earlier file (consecutive or not)
//! and fills the rest with fresh entities. Duplicated records receive
//! typo-style edits in text fields and forced re-draws in categorical
//! fields, with text fields weighted more likely to be corrupted.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::GroundTruth;
use crate::records::{Corpus, FieldValue, Record, RecordFile};
use crate::rng;
use crate::schema::{FieldDef, FieldKind, FieldSchema};

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("overlap must lie in (0, 1]")]
    BadOverlap,
    #[error("need at least {needed} distinct earlier entities for file {file}, have {available}")]
    InfeasibleOverlap {
        file: usize,
        needed: usize,
        available: usize,
    },
    #[error("max errors {0} exceeds field count {1}")]
    TooManyErrors(usize, usize),
    #[error("files and records per file must be at least 1")]
    EmptyConfig,
    #[error("numeric fields are not generated; use text or categorical fields")]
    UnsupportedField,
}

/// The default ten-field schema: two text name fields, an occupation-like
/// categorical, an age-band categorical, and six 12-category fields.
pub fn default_schema() -> FieldSchema {
    let mut fields = vec![
        FieldDef::text("given_name"),
        FieldDef::text("surname"),
        FieldDef::categorical("occupation"),
        FieldDef::categorical("age_band"),
    ];
    for i in 1..=6 {
        fields.push(FieldDef::categorical(&format!("q{i}")));
    }
    FieldSchema::new(fields).expect("default schema is valid")
}

fn default_overlap() -> f64 {
    0.3
}

fn default_text_weight() -> f64 {
    3.0
}

fn default_files() -> usize {
    4
}

fn default_records() -> usize {
    200
}

fn default_max_errors() -> usize {
    2
}

/// Generator settings. The overlap is the exact fraction of each later
/// file's records that duplicate earlier entities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(default = "default_files")]
    pub files: usize,
    #[serde(default = "default_records")]
    pub records_per_file: usize,
    /// Per-file record counts overriding `records_per_file`; must list one
    /// count per file. Unequal sizes can make an overlap infeasible (a later
    /// file demanding more duplicates than entities exist).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_sizes: Option<Vec<usize>>,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    #[serde(default = "default_max_errors")]
    pub max_errors: usize,
    /// Relative weight of text fields when placing errors (categorical
    /// fields weigh 1).
    #[serde(default = "default_text_weight")]
    pub text_error_weight: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            files: default_files(),
            records_per_file: default_records(),
            file_sizes: None,
            overlap: default_overlap(),
            max_errors: default_max_errors(),
            text_error_weight: default_text_weight(),
        }
    }
}

impl GenConfig {
    fn sizes(&self) -> Result<Vec<usize>, GenError> {
        match &self.file_sizes {
            Some(sizes) => {
                if sizes.len() != self.files || sizes.iter().any(|&n| n == 0) {
                    return Err(GenError::EmptyConfig);
                }
                Ok(sizes.clone())
            }
            None => Ok(vec![self.records_per_file; self.files]),
        }
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

const OCCUPATIONS: &[&str] = &[
    "farmer", "clerk", "teacher", "nurse", "driver", "baker", "mason", "tailor", "smith",
    "fisher", "miner", "weaver", "cook", "scribe", "trader", "joiner", "porter", "glazier",
    "cooper", "potter",
];

const AGE_BANDS: &[&str] = &[
    "0-17", "18-25", "26-35", "36-45", "46-55", "56-65", "66-75", "76+",
];

/// Value domains and error machinery for one schema.
pub struct Generator {
    schema: FieldSchema,
    domains: Vec<Option<Vec<String>>>,
    text_weight: f64,
}

impl Generator {
    pub fn new(schema: FieldSchema, text_weight: f64) -> Result<Self, GenError> {
        let mut domains = Vec::with_capacity(schema.field_count());
        for fd in schema.fields() {
            match &fd.kind {
                FieldKind::Text { .. } => domains.push(None),
                FieldKind::Categorical => {
                    let domain: Vec<String> = if fd.name == "occupation" {
                        OCCUPATIONS.iter().map(|s| s.to_string()).collect()
                    } else if fd.name == "age_band" {
                        AGE_BANDS.iter().map(|s| s.to_string()).collect()
                    } else {
                        (1..=12).map(|i| format!("c{i:02}")).collect()
                    };
                    domains.push(Some(domain));
                }
                FieldKind::Numeric { .. } => return Err(GenError::UnsupportedField),
            }
        }
        Ok(Generator {
            schema,
            domains,
            text_weight,
        })
    }

    fn random_name<R: Rng>(&self, rng: &mut R) -> String {
        let syllables = rng.random_range(2..=4);
        let mut out = String::new();
        for _ in 0..syllables {
            out.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            out.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
            if rng.random_range(0..4) == 0 {
                out.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            }
        }
        out
    }

    /// A fresh entity's canonical record.
    pub fn fresh_record<R: Rng>(&self, rng: &mut R) -> Record {
        let values = self
            .domains
            .iter()
            .map(|domain| match domain {
                None => FieldValue::Text(self.random_name(rng)),
                Some(d) => FieldValue::Text(d[rng.random_range(0..d.len())].clone()),
            })
            .collect();
        Record { values }
    }

    fn corrupt_text<R: Rng>(&self, value: &str, rng: &mut R) -> String {
        let original: Vec<char> = value.chars().collect();
        for _ in 0..32 {
            let mut chars = original.clone();
            match rng.random_range(0..4u8) {
                0 => {
                    // insert
                    let pos = rng.random_range(0..=chars.len());
                    let c = (b'a' + rng.random_range(0..26u8)) as char;
                    chars.insert(pos, c);
                }
                1 => {
                    // delete, keeping at least one character
                    if chars.len() >= 2 {
                        let pos = rng.random_range(0..chars.len());
                        chars.remove(pos);
                    } else {
                        continue;
                    }
                }
                2 => {
                    // substitute
                    let pos = rng.random_range(0..chars.len());
                    chars[pos] = (b'a' + rng.random_range(0..26u8)) as char;
                }
                _ => {
                    // transpose adjacent
                    if chars.len() >= 2 {
                        let pos = rng.random_range(0..chars.len() - 1);
                        chars.swap(pos, pos + 1);
                    } else {
                        continue;
                    }
                }
            }
            if chars != original {
                return chars.into_iter().collect();
            }
        }
        // pathological input; append a character so the edit is visible
        let mut out = value.to_string();
        out.push('x');
        out
    }

    fn corrupt_categorical<R: Rng>(&self, field: usize, value: &str, rng: &mut R) -> String {
        let domain = self.domains[field].as_ref().expect("categorical field");
        loop {
            let candidate = &domain[rng.random_range(0..domain.len())];
            if candidate != value {
                return candidate.clone();
            }
        }
    }

    /// Corrupts a duplicate: the error count is uniform on
    /// `{1, ..., max_errors}` (zero errors only when `max_errors` is 0), and
    /// fields are drawn without replacement with text fields weighted by the
    /// configured factor. Every corrupted field is guaranteed to differ from
    /// the original.
    pub fn inject_errors<R: Rng>(&self, record: &Record, max_errors: usize, rng: &mut R) -> Record {
        let mut out = record.clone();
        if max_errors == 0 {
            return out;
        }
        let n_errors = rng.random_range(1..=max_errors);
        let mut remaining: Vec<usize> = (0..self.schema.field_count()).collect();
        for _ in 0..n_errors {
            if remaining.is_empty() {
                break;
            }
            let weights: Vec<f64> = remaining
                .iter()
                .map(|&f| match self.domains[f] {
                    None => self.text_weight,
                    Some(_) => 1.0,
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = remaining.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                pick -= w;
                if pick < 0.0 {
                    chosen = i;
                    break;
                }
            }
            let field = remaining.swap_remove(chosen);
            let value = out.values[field]
                .as_text()
                .expect("generated fields are textual")
                .to_string();
            let corrupted = match self.domains[field] {
                None => self.corrupt_text(&value, rng),
                Some(_) => self.corrupt_categorical(field, &value, rng),
            };
            out.values[field] = FieldValue::Text(corrupted);
        }
        out
    }
}

/// Generates a corpus and its ground truth; deterministic given the seed.
pub fn generate_corpus(
    schema: &FieldSchema,
    config: &GenConfig,
    seed: u64,
) -> Result<(Corpus, GroundTruth), GenError> {
    if config.files == 0 || config.records_per_file == 0 {
        return Err(GenError::EmptyConfig);
    }
    if !(config.overlap > 0.0 && config.overlap <= 1.0) {
        return Err(GenError::BadOverlap);
    }
    if config.max_errors > schema.field_count() {
        return Err(GenError::TooManyErrors(
            config.max_errors,
            schema.field_count(),
        ));
    }
    let generator = Generator::new(schema.clone(), config.text_error_weight)?;
    let sizes = config.sizes()?;
    let mut rng = rng::stream(seed, 0, "synthgen", 0);

    let mut corpus = Corpus::new(schema.clone());
    let mut truth = GroundTruth { entities: vec![] };
    // canonical record per entity id, in creation order (id = index + 1)
    let mut entities: Vec<Record> = Vec::new();

    for file in 0..config.files {
        let n = sizes[file];
        let mut rows: Vec<(u64, Record)> = Vec::with_capacity(n);
        let n_dup = if file == 0 {
            0
        } else {
            (config.overlap * n as f64).round() as usize
        };
        if n_dup > entities.len() {
            return Err(GenError::InfeasibleOverlap {
                file: file + 1,
                needed: n_dup,
                available: entities.len(),
            });
        }
        if n_dup > 0 {
            let picks = rand::seq::index::sample(&mut rng, entities.len(), n_dup);
            for idx in picks {
                let record = generator.inject_errors(&entities[idx], config.max_errors, &mut rng);
                rows.push((idx as u64 + 1, record));
            }
        }
        for _ in n_dup..n {
            let record = generator.fresh_record(&mut rng);
            entities.push(record.clone());
            rows.push((entities.len() as u64, record));
        }
        rows.shuffle(&mut rng);
        truth
            .entities
            .push(rows.iter().map(|(id, _)| *id).collect());
        let file = RecordFile {
            records: rows.into_iter().map(|(_, r)| r).collect(),
        };
        corpus.push_file(file).expect("generated files are well-formed");
    }
    Ok((corpus, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::precision_recall_f1;
    use crate::linkage;
    use crate::records::write_record_csv;

    fn small_config() -> GenConfig {
        GenConfig {
            files: 4,
            records_per_file: 20,
            overlap: 0.3,
            max_errors: 2,
            ..GenConfig::default()
        }
    }

    #[test]
    fn exact_duplicate_counts_and_no_repeats_within_file() {
        let schema = default_schema();
        let config = small_config();
        let (_, truth) = generate_corpus(&schema, &config, 7).unwrap();
        // 0.3 * 20 = 6 duplicates in each later file
        for (file, ids) in truth.entities.iter().enumerate() {
            let unique: std::collections::BTreeSet<u64> = ids.iter().copied().collect();
            assert_eq!(unique.len(), ids.len(), "entity repeated in file {file}");
            if file > 0 {
                let earlier: std::collections::BTreeSet<u64> = truth.entities[..file]
                    .iter()
                    .flatten()
                    .copied()
                    .collect();
                let dups = ids.iter().filter(|id| earlier.contains(id)).count();
                assert_eq!(dups, 6, "file {file}");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let schema = default_schema();
        let config = small_config();
        let (c1, t1) = generate_corpus(&schema, &config, 99).unwrap();
        let (c2, t2) = generate_corpus(&schema, &config, 99).unwrap();
        assert_eq!(t1, t2);
        for (f1, f2) in c1.files.iter().zip(c2.files.iter()) {
            let mut b1 = Vec::new();
            let mut b2 = Vec::new();
            write_record_csv(&schema, f1, &mut b1).unwrap();
            write_record_csv(&schema, f2, &mut b2).unwrap();
            assert_eq!(b1, b2);
        }
        let (c3, _) = generate_corpus(&schema, &config, 100).unwrap();
        let mut b1 = Vec::new();
        let mut b3 = Vec::new();
        write_record_csv(&schema, &c1.files[0], &mut b1).unwrap();
        write_record_csv(&schema, &c3.files[0], &mut b3).unwrap();
        assert_ne!(b1, b3);
    }

    #[test]
    fn truth_round_trip_scores_perfectly() {
        let schema = default_schema();
        let (_, truth) = generate_corpus(&schema, &small_config(), 3).unwrap();
        let z = truth.to_matching_vectors();
        assert_eq!(linkage::validate_links(&z), Ok(true));
        let (p, r, f1) = precision_recall_f1(&z, &truth).unwrap();
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let schema = default_schema();
        let mut config = small_config();
        config.overlap = 0.0;
        assert!(matches!(
            generate_corpus(&schema, &config, 1),
            Err(GenError::BadOverlap)
        ));
        config.overlap = 1.5;
        assert!(matches!(
            generate_corpus(&schema, &config, 1),
            Err(GenError::BadOverlap)
        ));
        config = small_config();
        config.max_errors = 11;
        assert!(matches!(
            generate_corpus(&schema, &config, 1),
            Err(GenError::TooManyErrors(11, 10))
        ));
    }

    #[test]
    fn infeasible_overlap_is_rejected() {
        let schema = default_schema();
        // full overlap with equal sizes is the tight-but-feasible boundary
        let tight = GenConfig {
            files: 2,
            records_per_file: 10,
            overlap: 1.0,
            ..GenConfig::default()
        };
        assert!(generate_corpus(&schema, &tight, 1).is_ok());
        // a big second file cannot duplicate more entities than exist
        let impossible = GenConfig {
            files: 2,
            file_sizes: Some(vec![4, 100]),
            overlap: 0.5,
            ..GenConfig::default()
        };
        assert!(matches!(
            generate_corpus(&schema, &impossible, 1),
            Err(GenError::InfeasibleOverlap {
                file: 2,
                needed: 50,
                available: 4,
            })
        ));
        let zero = GenConfig {
            files: 2,
            records_per_file: 0,
            ..GenConfig::default()
        };
        assert!(matches!(
            generate_corpus(&schema, &zero, 1),
            Err(GenError::EmptyConfig)
        ));
    }

    #[test]
    fn injected_errors_always_change_the_field() {
        let schema = default_schema();
        let generator = Generator::new(schema.clone(), 3.0).unwrap();
        let mut rng = crate::rng::stream(5, 0, "test", 0);
        let original = generator.fresh_record(&mut rng);
        // max_errors = 0 leaves the record untouched
        let same = generator.inject_errors(&original, 0, &mut rng);
        assert_eq!(same, original);
        for _ in 0..200 {
            let corrupted = generator.inject_errors(&original, 10, &mut rng);
            let mut changed = 0;
            for (f, (a, b)) in original
                .values
                .iter()
                .zip(corrupted.values.iter())
                .enumerate()
            {
                let (a, b) = (a.as_text().unwrap(), b.as_text().unwrap());
                if a != b {
                    changed += 1;
                    assert!(crate::comparators::levenshtein(a, b) >= 1);
                    let _ = f;
                }
            }
            assert!((1..=10).contains(&changed));
        }
    }
}
