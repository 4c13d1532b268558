//! Chain state with incrementally maintained caches.
//!
//! A state owns the `(m, u)` parameters, the matching vectors, the reverse
//! link index, and the matched-level tallies over every compared pair. A
//! single component change touches only the pairs between the backward chain
//! of the affected target and the forward chain of the moving record, so the
//! tallies update in time proportional to cluster size rather than corpus
//! size.

use crate::comparators::ComparisonSet;
use crate::linkage::{InboundIndex, MatchingVectors};
use crate::model::{self, AgreementCounts, MuParams};
use crate::records::FileSizes;
use crate::schema::FieldSchema;

#[derive(Debug, Clone)]
pub struct ChainState {
    pub mu: MuParams,
    z: MatchingVectors,
    inbound: InboundIndex,
    matched: Vec<u64>,
    sizes: FileSizes,
}

impl ChainState {
    /// Builds a state from parts, computing the caches from scratch. The
    /// vectors must be valid.
    pub fn new(
        schema: &FieldSchema,
        comps: &ComparisonSet,
        mu: MuParams,
        z: MatchingVectors,
    ) -> Result<Self, model::ModelError> {
        let inbound = InboundIndex::build(&z)?;
        let counts = model::agreement_counts(schema, comps, &z)?;
        Ok(ChainState {
            mu,
            sizes: z.sizes(),
            z,
            inbound,
            matched: counts.matched,
        })
    }

    /// Builds a state from a valid configuration whose matched tallies are
    /// already known, rebuilding only the reverse index. Streaming updates
    /// use this to avoid re-tallying old data.
    pub fn from_cached(
        z: MatchingVectors,
        mu: MuParams,
        matched: Vec<u64>,
    ) -> Result<Self, model::ModelError> {
        let inbound = InboundIndex::build(&z)?;
        Ok(ChainState {
            mu,
            sizes: z.sizes(),
            z,
            inbound,
            matched,
        })
    }

    pub fn z(&self) -> &MatchingVectors {
        &self.z
    }

    pub fn inbound(&self) -> &InboundIndex {
        &self.inbound
    }

    pub fn matched(&self) -> &[u64] {
        &self.matched
    }

    pub fn sizes(&self) -> &FileSizes {
        &self.sizes
    }

    /// Matched plus derived unmatched tallies given the per-slot pair totals.
    pub fn counts(&self, level_totals: &[u64]) -> AgreementCounts {
        AgreementCounts {
            unmatched: level_totals
                .iter()
                .zip(self.matched.iter())
                .map(|(t, m)| t - m)
                .collect(),
            matched: self.matched.clone(),
        }
    }

    fn tally_cross(
        &mut self,
        schema: &FieldSchema,
        comps: &ComparisonSet,
        prefix: &[usize],
        suffix: &[(usize, usize, usize)],
        add: bool,
    ) {
        for &(_, file, row) in suffix {
            for &p in prefix {
                for (f, &code) in comps.pair_levels(p, file, row).iter().enumerate() {
                    let slot = schema.block_offset(f) + code as usize;
                    if add {
                        self.matched[slot] += 1;
                    } else {
                        self.matched[slot] -= 1;
                    }
                }
            }
        }
    }

    /// Sets component `row` of vector `v`, updating the reverse index and
    /// matched tallies. The new value must keep the state valid (link targets
    /// must be free).
    pub fn set_component(
        &mut self,
        schema: &FieldSchema,
        comps: &ComparisonSet,
        v: usize,
        row: usize,
        new_value: usize,
    ) {
        let old_value = self.z.value(v, row);
        if old_value == new_value {
            return;
        }
        let own = self.z.self_value(v, row);
        let suffix = model::suffix_chain(own, &self.sizes, &self.inbound);
        if let Some(t_old) = self.z.target(v, row) {
            let prefix = model::prefix_chain(t_old, &self.z);
            self.tally_cross(schema, comps, &prefix, &suffix, false);
            self.inbound.clear_link(own, t_old);
        }
        self.z.set(v, row, new_value);
        if new_value < self.z.prev_total(v) {
            let prefix = model::prefix_chain(new_value, &self.z);
            self.tally_cross(schema, comps, &prefix, &suffix, true);
            self.inbound.set_link(own, new_value);
        }
    }

    /// Replaces every vector except the last with `old_z` (which covers one
    /// file fewer), reusing that configuration's precomputed matched tallies
    /// over the old data and re-tallying only the pairs that involve the
    /// newest file. Used when a pool proposal is accepted.
    pub fn replace_old_vectors(
        &mut self,
        schema: &FieldSchema,
        comps: &ComparisonSet,
        old_z: &MatchingVectors,
        old_matched: &[u64],
    ) {
        let k = self.sizes.file_count();
        let last = self.z.vector(k - 2).to_vec();
        let mut vectors: Vec<Vec<usize>> = old_z.vectors().to_vec();
        vectors.push(last);
        self.z = MatchingVectors::from_vectors(&self.sizes, vectors)
            .expect("pool draw has correct shape");
        self.inbound = InboundIndex::build(&self.z).expect("proposal checked for conflicts");
        self.matched = old_matched.to_vec();
        // Pairs between the newest file and everything earlier: each linked
        // record of the new file matches its target's backward chain.
        let v_last = k - 2;
        for row in 0..self.sizes.size(k - 1) {
            if let Some(t) = self.z.target(v_last, row) {
                let prefix = model::prefix_chain(t, &self.z);
                for &p in &prefix {
                    for (f, &code) in comps.pair_levels(p, k - 1, row).iter().enumerate() {
                        self.matched[schema.block_offset(f) + code as usize] += 1;
                    }
                }
            }
        }
    }

    /// Recomputes both caches from scratch and checks they match; property
    /// and debug checks call this after batches of moves.
    pub fn verify_cache(
        &self,
        schema: &FieldSchema,
        comps: &ComparisonSet,
    ) -> Result<(), String> {
        let inbound = InboundIndex::build(&self.z).map_err(|e| e.to_string())?;
        if inbound != self.inbound {
            return Err("reverse link index diverged from vectors".into());
        }
        let counts = model::agreement_counts(schema, comps, &self.z).map_err(|e| e.to_string())?;
        if counts.matched != self.matched {
            return Err(format!(
                "matched tallies diverged: cached {:?}, recomputed {:?}",
                self.matched, counts.matched
            ));
        }
        Ok(())
    }
}
