//! Streaming Bayesian record linkage.
//!
//! Files of records arrive one at a time. Records in a new file may duplicate
//! entities from earlier files; linkage state is a set of matching vectors,
//! one per file after the first, in which each record either points at one
//! earlier record or at itself. Inference targets the joint posterior of the
//! matching vectors together with per-field agreement probabilities for
//! coreferent (`m`) and non-coreferent (`u`) record pairs.
//!
//! The crate provides:
//!
//! - [`schema`] / [`records`]: field schemas, record files, global indexing.
//! - [`linkage`]: matching vectors, the link validity constraint, cluster
//!   tracing, match sets, candidate sets.
//! - [`comparators`]: per-field comparison levels and comparison matrices.
//! - [`model`]: likelihood, priors, posterior, and full conditionals.
//! - [`samplers`]: component-wise Gibbs, locally balanced moves,
//!   pool-resampling streaming updates, and ensemble streaming updates.
//! - [`evaluation`]: precision/recall/F1, entity counts, effective sample
//!   size, pool-degeneracy counts.
//! - [`synthgen`]: synthetic longitudinal corpora with controlled overlap and
//!   error injection.
//! - [`store`]: on-disk sample stores and comparison containers.

pub mod comparators;
pub mod evaluation;
pub mod linkage;
pub mod model;
pub mod records;
pub mod rng;
pub mod samplers;
pub mod schema;
pub mod store;
pub mod synthgen;

pub use linkage::MatchingVectors;
pub use records::{Corpus, FileSizes, GlobalIndex, Record, RecordFile};
pub use schema::{FieldDef, FieldKind, FieldSchema};
