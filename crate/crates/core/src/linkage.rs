//! Matching vectors and the link structure they induce.
//!
//! For `k` files there are `k-1` matching vectors. The vector for file `m`
//! (`m >= 2`) has one component per record of file `m`, holding the global
//! index of an earlier record (a link) or the record's own global index (no
//! link). A collection of vectors is *valid* when no record receives more
//! than one inbound link; valid collections partition records into chains
//! with at most one record per file, and each such cluster has exactly one
//! vector representation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{FileSizes, GlobalIndex};

#[derive(Debug, Error, PartialEq)]
pub enum LinkageError {
    #[error("expected {expected} matching vectors, found {found}")]
    VectorCount { expected: usize, found: usize },
    #[error("vector {vector}: expected length {expected}, found {found}")]
    VectorLength {
        vector: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector {vector}, component {row}: value {value} out of range")]
    ComponentRange {
        vector: usize,
        row: usize,
        value: usize,
    },
    #[error("matching vectors violate the link validity constraint")]
    InvalidLinks,
    #[error("global index {0} out of range")]
    IndexRange(usize),
}

/// The `k-1` matching vectors for a `k`-file corpus.
///
/// `vectors[v]` belongs to file `v + 1` (0-based); its components are global
/// indices as described in the module docs. A component equals the record's
/// own global index exactly when the record has no link, so every component
/// is itself a global index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MatchingVectors {
    sizes: Vec<usize>,
    vectors: Vec<Vec<usize>>,
}

impl MatchingVectors {
    /// All records unlinked.
    pub fn unlinked(sizes: &FileSizes) -> Self {
        let k = sizes.file_count();
        assert!(k >= 1);
        let mut vectors = Vec::with_capacity(k.saturating_sub(1));
        for file in 1..k {
            let base = sizes.before(file);
            vectors.push((0..sizes.size(file)).map(|j| base + j).collect());
        }
        MatchingVectors {
            sizes: sizes.0.clone(),
            vectors,
        }
    }

    /// Builds from raw component values, checking structure (lengths and
    /// ranges) but not validity.
    pub fn from_vectors(sizes: &FileSizes, vectors: Vec<Vec<usize>>) -> Result<Self, LinkageError> {
        let z = MatchingVectors {
            sizes: sizes.0.clone(),
            vectors,
        };
        z.check_structure()?;
        Ok(z)
    }

    pub fn sizes(&self) -> FileSizes {
        FileSizes(self.sizes.clone())
    }

    pub fn file_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn vector_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector(&self, v: usize) -> &[usize] {
        &self.vectors[v]
    }

    pub fn vectors(&self) -> &[Vec<usize>] {
        &self.vectors
    }

    /// Total records in files before the one `vectors[v]` belongs to; legal
    /// link targets for that vector are `0..prev_total(v)`.
    pub fn prev_total(&self, v: usize) -> usize {
        self.sizes[..=v].iter().sum()
    }

    /// Global index of record `(v + 1, row)`, which doubles as the vector
    /// component's no-link value.
    pub fn self_value(&self, v: usize, row: usize) -> usize {
        self.prev_total(v) + row
    }

    pub fn value(&self, v: usize, row: usize) -> usize {
        self.vectors[v][row]
    }

    pub fn set(&mut self, v: usize, row: usize, value: usize) {
        debug_assert!(value < self.prev_total(v) || value == self.self_value(v, row));
        self.vectors[v][row] = value;
    }

    /// The link target of record `(v + 1, row)`, if linked.
    pub fn target(&self, v: usize, row: usize) -> Option<usize> {
        let value = self.vectors[v][row];
        (value < self.prev_total(v)).then_some(value)
    }

    /// Outbound link target of an arbitrary record by global index.
    pub fn target_of_global(&self, g: usize) -> Option<usize> {
        let (file, row) = FileSizes(self.sizes.clone()).file_row(GlobalIndex(g));
        if file == 0 {
            None
        } else {
            self.target(file - 1, row)
        }
    }

    /// Number of linked components in vector `v`.
    pub fn link_count(&self, v: usize) -> usize {
        link_count(&self.vectors[v], self.prev_total(v))
    }

    pub fn total_links(&self) -> usize {
        (0..self.vector_count()).map(|v| self.link_count(v)).sum()
    }

    fn check_structure(&self) -> Result<(), LinkageError> {
        if self.vectors.len() + 1 != self.sizes.len() {
            return Err(LinkageError::VectorCount {
                expected: self.sizes.len().saturating_sub(1),
                found: self.vectors.len(),
            });
        }
        for (v, vec) in self.vectors.iter().enumerate() {
            let n = self.sizes[v + 1];
            if vec.len() != n {
                return Err(LinkageError::VectorLength {
                    vector: v,
                    expected: n,
                    found: vec.len(),
                });
            }
            let prev = self.prev_total(v);
            for (row, &value) in vec.iter().enumerate() {
                if value >= prev && value != prev + row {
                    return Err(LinkageError::ComponentRange { vector: v, row, value });
                }
            }
        }
        Ok(())
    }

    /// External form: per-vector arrays of 1-based values.
    pub fn to_external(&self) -> Vec<Vec<usize>> {
        self.vectors
            .iter()
            .map(|v| v.iter().map(|x| x + 1).collect())
            .collect()
    }

    pub fn from_external(
        sizes: &FileSizes,
        external: Vec<Vec<usize>>,
    ) -> Result<Self, LinkageError> {
        let vectors = external
            .into_iter()
            .map(|v| v.into_iter().map(|x| x.saturating_sub(1)).collect())
            .collect();
        Self::from_vectors(sizes, vectors)
    }
}

/// External JSON envelope for matching vectors: 1-based component arrays
/// grouped per file, with the file sizes alongside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingVectorsEnvelope {
    pub file_sizes: Vec<usize>,
    pub vectors: Vec<Vec<usize>>,
}

impl From<&MatchingVectors> for MatchingVectorsEnvelope {
    fn from(z: &MatchingVectors) -> Self {
        MatchingVectorsEnvelope {
            file_sizes: z.sizes.clone(),
            vectors: z.to_external(),
        }
    }
}

impl TryFrom<MatchingVectorsEnvelope> for MatchingVectors {
    type Error = LinkageError;
    fn try_from(e: MatchingVectorsEnvelope) -> Result<Self, Self::Error> {
        MatchingVectors::from_external(&FileSizes(e.file_sizes), e.vectors)
    }
}

/// A maximal chain of linked records, at most one per file, sorted by file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub members: Vec<GlobalIndex>,
}

/// Reverse link index: for each record, the record that links *into* it.
///
/// Under the validity constraint each record has at most one inbound link,
/// which makes forward tracing branch-free. The index is maintained
/// incrementally by samplers as links change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InboundIndex {
    inbound: Vec<Option<usize>>,
}

impl InboundIndex {
    /// Builds the index, failing if any record receives two inbound links.
    pub fn build(z: &MatchingVectors) -> Result<Self, LinkageError> {
        z.check_structure()?;
        let mut inbound = vec![None; FileSizes(z.sizes.clone()).total()];
        for v in 0..z.vector_count() {
            for row in 0..z.vector(v).len() {
                if let Some(t) = z.target(v, row) {
                    let src = z.self_value(v, row);
                    if inbound[t].is_some() {
                        return Err(LinkageError::InvalidLinks);
                    }
                    inbound[t] = Some(src);
                }
            }
        }
        Ok(InboundIndex { inbound })
    }

    pub fn empty(total: usize) -> Self {
        InboundIndex {
            inbound: vec![None; total],
        }
    }

    /// Source of the unique inbound link into `g`, if any.
    pub fn source_into(&self, g: usize) -> Option<usize> {
        self.inbound[g]
    }

    pub fn is_free(&self, g: usize) -> bool {
        self.inbound[g].is_none()
    }

    pub fn set_link(&mut self, source: usize, target: usize) {
        debug_assert!(self.inbound[target].is_none());
        self.inbound[target] = Some(source);
    }

    pub fn clear_link(&mut self, source: usize, target: usize) {
        debug_assert_eq!(self.inbound[target], Some(source));
        self.inbound[target] = None;
    }
}

/// True iff the vectors satisfy the link validity constraint: no record is
/// the target of two or more links across all vectors. Structural defects
/// (wrong lengths, out-of-range components) are errors, distinct from a
/// `false` result.
pub fn validate_links(z: &MatchingVectors) -> Result<bool, LinkageError> {
    z.check_structure()?;
    let mut taken = vec![false; FileSizes(z.sizes.clone()).total()];
    for v in 0..z.vector_count() {
        for row in 0..z.vector(v).len() {
            if let Some(t) = z.target(v, row) {
                if taken[t] {
                    return Ok(false);
                }
                taken[t] = true;
            }
        }
    }
    Ok(true)
}

/// The maximal chain containing `start`: follow outbound links backwards,
/// then inbound links forwards. Requires valid vectors.
pub fn trace_cluster(start: GlobalIndex, z: &MatchingVectors) -> Result<Cluster, LinkageError> {
    if !validate_links(z)? {
        return Err(LinkageError::InvalidLinks);
    }
    let inbound = InboundIndex::build(z)?;
    if start.0 >= FileSizes(z.sizes.clone()).total() {
        return Err(LinkageError::IndexRange(start.0));
    }
    Ok(trace_with_index(start, z, &inbound))
}

/// Tracing against a prebuilt inbound index; used on sampler hot paths.
pub fn trace_with_index(start: GlobalIndex, z: &MatchingVectors, inbound: &InboundIndex) -> Cluster {
    let mut members = Vec::new();
    let mut cur = start.0;
    while let Some(t) = z.target_of_global(cur) {
        members.push(GlobalIndex(t));
        cur = t;
    }
    members.reverse();
    members.push(start);
    cur = start.0;
    while let Some(src) = inbound.source_into(cur) {
        members.push(GlobalIndex(src));
        cur = src;
    }
    Cluster { members }
}

/// All unordered cross-file record pairs lying in a common cluster, with the
/// earlier-file record first. Requires valid vectors.
pub fn match_set(
    z: &MatchingVectors,
) -> Result<BTreeSet<(GlobalIndex, GlobalIndex)>, LinkageError> {
    if !validate_links(z)? {
        return Err(LinkageError::InvalidLinks);
    }
    let inbound = InboundIndex::build(z)?;
    let total = FileSizes(z.sizes.clone()).total();
    let mut pairs = BTreeSet::new();
    for g in 0..total {
        // Chain heads have no outbound link; walking forward from each head
        // visits every record exactly once.
        if z.target_of_global(g).is_some() {
            continue;
        }
        let mut chain = vec![g];
        let mut cur = g;
        while let Some(src) = inbound.source_into(cur) {
            chain.push(src);
            cur = src;
        }
        for i in 0..chain.len() {
            for j in (i + 1)..chain.len() {
                pairs.insert((GlobalIndex(chain[i]), GlobalIndex(chain[j])));
            }
        }
    }
    Ok(pairs)
}

/// The candidate set: records (across all files the vectors cover) that
/// receive no inbound link and so may legally be targeted by the next file's
/// vector. Requires valid vectors.
pub fn candidate_set(z: &MatchingVectors) -> Result<BTreeSet<GlobalIndex>, LinkageError> {
    if !validate_links(z)? {
        return Err(LinkageError::InvalidLinks);
    }
    let inbound = InboundIndex::build(z)?;
    let total = FileSizes(z.sizes.clone()).total();
    Ok((0..total)
        .filter(|&g| inbound.is_free(g))
        .map(GlobalIndex)
        .collect())
}

/// Number of components of one vector that are links, i.e. values below the
/// previous-files record total.
pub fn link_count(vector: &[usize], prev_total: usize) -> usize {
    vector.iter().filter(|&&v| v < prev_total).count()
}

/// Draws a random *valid* configuration by linking each component to a free
/// target with the given probability. Test helper shared across modules.
#[cfg(test)]
pub(crate) fn random_valid_z(
    sz: &FileSizes,
    density: f64,
    rng: &mut rand::rngs::StdRng,
) -> MatchingVectors {
    use rand::Rng;
    let mut z = MatchingVectors::unlinked(sz);
    let mut taken = vec![false; sz.total()];
    for v in 0..z.vector_count() {
        let prev = z.prev_total(v);
        for row in 0..sz.size(v + 1) {
            if rng.random::<f64>() < density {
                let free: Vec<usize> = (0..prev).filter(|&g| !taken[g]).collect();
                if free.is_empty() {
                    continue;
                }
                let t = free[rng.random_range(0..free.len())];
                z.set(v, row, t);
                taken[t] = true;
            }
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sizes(s: &[usize]) -> FileSizes {
        FileSizes(s.to_vec())
    }

    /// Brute-force connected component of `start` in the undirected link
    /// graph; the oracle for cluster tracing.
    fn component_of(start: usize, z: &MatchingVectors) -> Vec<usize> {
        let total = z.sizes().total();
        let mut adj = vec![Vec::new(); total];
        for v in 0..z.vector_count() {
            for row in 0..z.vector(v).len() {
                if let Some(t) = z.target(v, row) {
                    let s = z.self_value(v, row);
                    adj[s].push(t);
                    adj[t].push(s);
                }
            }
        }
        let mut seen = vec![false; total];
        let mut stack = vec![start];
        let mut out = Vec::new();
        seen[start] = true;
        while let Some(g) = stack.pop() {
            out.push(g);
            for &nb in &adj[g] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn all_self_links_are_valid() {
        let z = MatchingVectors::unlinked(&sizes(&[2, 3, 2]));
        assert_eq!(validate_links(&z), Ok(true));
        assert_eq!(z.total_links(), 0);
    }

    #[test]
    fn shared_target_is_invalid() {
        // Three files, one record each: both later records point at the first.
        let sz = sizes(&[1, 1, 1]);
        let z = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![0]]).unwrap();
        assert_eq!(validate_links(&z), Ok(false));
    }

    #[test]
    fn chain_through_middle_file_is_valid() {
        // x21 -> x11 and x31 -> x21: same cluster, no shared target.
        let sz = sizes(&[1, 1, 1]);
        let z = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![1]]).unwrap();
        assert_eq!(validate_links(&z), Ok(true));
    }

    #[test]
    fn structure_errors_are_not_false() {
        let sz = sizes(&[1, 1, 1]);
        let wrong_len = MatchingVectors::from_vectors(&sz, vec![vec![0, 0], vec![2]]);
        assert!(matches!(wrong_len, Err(LinkageError::VectorLength { .. })));
        // A value in the self range but not equal to the component's own
        // global index is structurally malformed.
        let bad_value = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![3]]);
        assert!(matches!(bad_value, Err(LinkageError::ComponentRange { .. })));
    }

    #[test]
    fn trace_singleton() {
        let sz = sizes(&[2, 2]);
        let z = MatchingVectors::unlinked(&sz);
        let c = trace_cluster(GlobalIndex(1), &z).unwrap();
        assert_eq!(c.members, vec![GlobalIndex(1)]);
    }

    #[test]
    fn trace_three_chain_from_latest() {
        let sz = sizes(&[1, 1, 1]);
        let z = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![1]]).unwrap();
        let c = trace_cluster(GlobalIndex(2), &z).unwrap();
        assert_eq!(
            c.members,
            vec![GlobalIndex(0), GlobalIndex(1), GlobalIndex(2)]
        );
        // Starting anywhere in the chain finds the same cluster.
        for g in 0..3 {
            assert_eq!(trace_cluster(GlobalIndex(g), &z).unwrap(), c);
        }
    }

    #[test]
    fn trace_matches_connected_components_on_random_instances() {
        let sz = sizes(&[4, 4, 4]);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let z = random_valid_z(&sz, 0.6, &mut rng);
            assert_eq!(validate_links(&z), Ok(true));
            for g in 0..sz.total() {
                let got: Vec<usize> = trace_cluster(GlobalIndex(g), &z)
                    .unwrap()
                    .members
                    .iter()
                    .map(|m| m.0)
                    .collect();
                assert_eq!(got, component_of(g, &z), "start {g}");
            }
        }
    }

    #[test]
    fn clusters_have_at_most_one_member_per_file() {
        let sz = sizes(&[3, 3, 3, 3]);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let z = random_valid_z(&sz, 0.7, &mut rng);
            for g in 0..sz.total() {
                let c = trace_cluster(GlobalIndex(g), &z).unwrap();
                let files: Vec<usize> = c.members.iter().map(|m| sz.file_row(*m).0).collect();
                let mut dedup = files.clone();
                dedup.dedup();
                assert_eq!(files, dedup, "cluster visits a file twice");
            }
        }
    }

    #[test]
    fn match_set_examples() {
        let sz = sizes(&[1, 1, 1]);
        let none = MatchingVectors::unlinked(&sz);
        assert!(match_set(&none).unwrap().is_empty());

        let chain = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![1]]).unwrap();
        let pairs = match_set(&chain).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(pairs.contains(&(GlobalIndex(0), GlobalIndex(2))));
    }

    #[test]
    fn match_set_equals_trace_closure() {
        let sz = sizes(&[3, 2, 3]);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let z = random_valid_z(&sz, 0.6, &mut rng);
            let pairs = match_set(&z).unwrap();
            let mut expect = BTreeSet::new();
            for g in 0..sz.total() {
                let members = trace_cluster(GlobalIndex(g), &z).unwrap().members;
                for i in 0..members.len() {
                    for j in (i + 1)..members.len() {
                        expect.insert((members[i], members[j]));
                    }
                }
            }
            assert_eq!(pairs, expect);
        }
    }

    #[test]
    fn match_set_rejects_invalid() {
        let sz = sizes(&[1, 1, 1]);
        let bad = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![0]]).unwrap();
        assert_eq!(match_set(&bad), Err(LinkageError::InvalidLinks));
    }

    #[test]
    fn candidate_set_examples() {
        // No links: every record is a candidate.
        let sz = sizes(&[2, 2]);
        let z = MatchingVectors::unlinked(&sz);
        assert_eq!(candidate_set(&z).unwrap().len(), 4);

        // Chain x21 -> x11, x31 -> x21 over three files: the two targeted
        // records are excluded, the latest is not.
        let sz = sizes(&[1, 1, 1]);
        let z = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![1]]).unwrap();
        let c = candidate_set(&z).unwrap();
        assert!(!c.contains(&GlobalIndex(0)));
        assert!(!c.contains(&GlobalIndex(1)));
        assert!(c.contains(&GlobalIndex(2)));
    }

    #[test]
    fn candidate_set_size_identity() {
        let sz = sizes(&[3, 3, 2]);
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..100 {
            let z = random_valid_z(&sz, 0.5, &mut rng);
            let c = candidate_set(&z).unwrap();
            assert_eq!(c.len(), sz.total() - z.total_links());
        }
    }

    #[test]
    fn link_count_examples() {
        let sz = sizes(&[5, 3]);
        let z = MatchingVectors::unlinked(&sz);
        assert_eq!(z.link_count(0), 0);

        // External spec values (1, N+2, 3) with N=5 are internal (0, 6, 2).
        assert_eq!(link_count(&[0, 6, 2], 5), 2);
        assert_eq!(link_count(&[0, 1, 2], 5), 3);
    }

    #[test]
    fn validity_equals_multiset_check() {
        // validate_links must agree with "no duplicate among linked targets".
        let sz = sizes(&[2, 2, 2]);
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..200 {
            // Arbitrary (possibly invalid) structurally-correct vectors.
            let mut vectors = Vec::new();
            for v in 0..2 {
                let prev = sz.before(v + 1);
                let mut vec = Vec::new();
                for row in 0..sz.size(v + 1) {
                    if rng.random::<f64>() < 0.7 {
                        vec.push(rng.random_range(0..prev));
                    } else {
                        vec.push(prev + row);
                    }
                }
                vectors.push(vec);
            }
            let z = MatchingVectors::from_vectors(&sz, vectors).unwrap();
            let mut targets = Vec::new();
            for v in 0..z.vector_count() {
                for row in 0..z.vector(v).len() {
                    if let Some(t) = z.target(v, row) {
                        targets.push(t);
                    }
                }
            }
            let unique: BTreeSet<usize> = targets.iter().copied().collect();
            assert_eq!(validate_links(&z).unwrap(), unique.len() == targets.len());
        }
    }

    #[test]
    fn external_form_is_one_based() {
        let sz = sizes(&[1, 1, 1]);
        let z = MatchingVectors::from_vectors(&sz, vec![vec![0], vec![1]]).unwrap();
        let env = MatchingVectorsEnvelope::from(&z);
        assert_eq!(env.vectors, vec![vec![1], vec![2]]);
        let back = MatchingVectors::try_from(env).unwrap();
        assert_eq!(back, z);
    }
}
