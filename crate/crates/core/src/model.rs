//! Likelihood, priors, posterior, and full conditionals.
//!
//! Agreement probabilities `m` (coreferent pairs) and `u` (non-coreferent
//! pairs) are per-field simplexes over comparison levels, concatenated into
//! `P`-vectors. Matching-vector priors come from a Beta-Bernoulli link
//! propensity marginalized analytically, so the propensity itself is never
//! instantiated. Everything is computed in log space with log-gamma for
//! factorial and Beta terms; the factorial ratios would overflow beyond a
//! couple hundred records otherwise.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::comparators::ComparisonSet;
use crate::linkage::{self, InboundIndex, LinkageError, MatchingVectors};
use crate::records::FileSizes;
use crate::schema::FieldSchema;

/// Probabilities below this floor count as zero: densities evaluating them
/// against positive counts return negative infinity instead of NaN.
pub const PROB_FLOOR: f64 = 1e-300;

/// Simplex tolerance for validating sampled probability vectors.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("hyperparameters must be strictly positive")]
    NonPositiveHyper,
    #[error("prior error probability must lie in (0, 1)")]
    BadErrorProbability,
    #[error("prior strength must be positive and finite")]
    BadStrength,
    #[error("expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("probability block {field} does not sum to one")]
    NotSimplex { field: usize },
    #[error("duplicate link targets within one vector")]
    DuplicateTargets,
    #[error(transparent)]
    Linkage(#[from] LinkageError),
}

/// The `m` and `u` probability vectors, stored as concatenated per-field
/// blocks of length `L_f + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuParams {
    pub m: Vec<f64>,
    pub u: Vec<f64>,
}

impl MuParams {
    /// Uniform within each field block.
    pub fn uniform(schema: &FieldSchema) -> Self {
        let mut m = vec![0.0; schema.total_levels()];
        for f in 0..schema.field_count() {
            let off = schema.block_offset(f);
            let len = schema.block_len(f);
            for slot in &mut m[off..off + len] {
                *slot = 1.0 / len as f64;
            }
        }
        MuParams { u: m.clone(), m }
    }

    pub fn validate(&self, schema: &FieldSchema) -> Result<(), ModelError> {
        let p = schema.total_levels();
        if self.m.len() != p || self.u.len() != p {
            return Err(ModelError::Shape {
                expected: p,
                found: self.m.len(),
            });
        }
        for f in 0..schema.field_count() {
            let off = schema.block_offset(f);
            let len = schema.block_len(f);
            for vec in [&self.m, &self.u] {
                let block = &vec[off..off + len];
                if block.iter().any(|x| *x < 0.0) {
                    return Err(ModelError::NotSimplex { field: f });
                }
                let sum: f64 = block.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(ModelError::NotSimplex { field: f });
                }
            }
        }
        Ok(())
    }
}

/// Dirichlet hyperparameters for `m` (vector `a`) and `u` (vector `b`),
/// concatenated per-field like [`MuParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletHyper {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DirichletHyper {
    pub fn flat(schema: &FieldSchema) -> Self {
        let p = schema.total_levels();
        DirichletHyper {
            a: vec![1.0; p],
            b: vec![1.0; p],
        }
    }

    /// Flat `b`, informative `a` built from per-field error probabilities
    /// and a common strength `s`.
    pub fn informative(
        schema: &FieldSchema,
        error_probs: &[f64],
        strength: f64,
    ) -> Result<Self, ModelError> {
        Ok(DirichletHyper {
            a: informative_m_prior(schema, error_probs, strength)?,
            b: vec![1.0; schema.total_levels()],
        })
    }

    pub fn validate(&self, schema: &FieldSchema) -> Result<(), ModelError> {
        let p = schema.total_levels();
        if self.a.len() != p || self.b.len() != p {
            return Err(ModelError::Shape {
                expected: p,
                found: self.a.len(),
            });
        }
        if self.a.iter().chain(self.b.iter()).any(|x| !(*x > 0.0)) {
            return Err(ModelError::NonPositiveHyper);
        }
        Ok(())
    }
}

/// Builds the concatenated `a` vector for an informative prior on `m`: field
/// `f` with error probability `p_f` and strength `s` gets the block
/// `s * [1 - p_f, p_f / L_f, ..., p_f / L_f]`, which sums to `s`.
pub fn informative_m_prior(
    schema: &FieldSchema,
    error_probs: &[f64],
    strength: f64,
) -> Result<Vec<f64>, ModelError> {
    if error_probs.len() != schema.field_count() {
        return Err(ModelError::Shape {
            expected: schema.field_count(),
            found: error_probs.len(),
        });
    }
    if !(strength > 0.0) || !strength.is_finite() {
        return Err(ModelError::BadStrength);
    }
    let mut a = vec![0.0; schema.total_levels()];
    for (f, &p) in error_probs.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(ModelError::BadErrorProbability);
        }
        let off = schema.block_offset(f);
        let levels = schema.levels(f);
        a[off] = strength * (1.0 - p);
        for slot in &mut a[off + 1..off + 1 + levels] {
            *slot = strength * p / levels as f64;
        }
    }
    Ok(a)
}

/// Beta hyperparameters of the marginalized link-propensity prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZPriorHyper {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ZPriorHyper {
    fn default() -> Self {
        ZPriorHyper {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl ZPriorHyper {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.alpha > 0.0 && self.beta > 0.0 {
            Ok(())
        } else {
            Err(ModelError::NonPositiveHyper)
        }
    }
}

/// Per-slot tallies of comparison levels among matched and unmatched pairs.
/// For every field block, matched + unmatched sums to the total pair count.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementCounts {
    pub matched: Vec<u64>,
    pub unmatched: Vec<u64>,
}

/// Tallies every compared pair into matched or unmatched according to the
/// match set of `z`. Requires valid vectors.
pub fn agreement_counts(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    z: &MatchingVectors,
) -> Result<AgreementCounts, ModelError> {
    let pairs = linkage::match_set(z)?;
    let sizes = comps.sizes();
    let mut matched = vec![0u64; schema.total_levels()];
    for (g1, g2) in &pairs {
        let (file2, row2) = sizes.file_row(*g2);
        for (f, &code) in comps.pair_levels(g1.0, file2, row2).iter().enumerate() {
            matched[schema.block_offset(f) + code as usize] += 1;
        }
    }
    let totals = comps.level_totals(schema);
    let unmatched = totals
        .iter()
        .zip(matched.iter())
        .map(|(t, m)| t - m)
        .collect();
    Ok(AgreementCounts { matched, unmatched })
}

fn log_prob_sum(probs: &[f64], counts: &[u64]) -> f64 {
    let mut total = 0.0;
    for (&p, &c) in probs.iter().zip(counts.iter()) {
        if c == 0 {
            continue;
        }
        if p < PROB_FLOOR {
            return f64::NEG_INFINITY;
        }
        total += c as f64 * p.ln();
    }
    total
}

/// Log of the data model: negative infinity when the vectors violate the
/// validity constraint, otherwise the sum of level-count log-probabilities
/// under `m` for matched pairs and `u` for unmatched pairs.
pub fn log_likelihood(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    mu: &MuParams,
    z: &MatchingVectors,
) -> Result<f64, ModelError> {
    if !linkage::validate_links(z)? {
        return Ok(f64::NEG_INFINITY);
    }
    let counts = agreement_counts(schema, comps, z)?;
    Ok(log_prob_sum(&mu.m, &counts.matched) + log_prob_sum(&mu.u, &counts.unmatched))
}

fn ln_beta(x: f64, y: f64) -> f64 {
    ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)
}

/// Log marginal prior of one matching vector given only its link count:
/// `ln[(N - c)!/N!] + ln B(c + alpha, n - c + beta) - ln B(alpha, beta)`
/// for `c` links among `n` components over `N` previous records.
pub fn log_z_prior_counts(links: usize, n: usize, prev_total: usize, hyper: &ZPriorHyper) -> f64 {
    let n_f = n as f64;
    let c = links as f64;
    let big_n = prev_total as f64;
    let factorial_ratio = ln_gamma(big_n - c + 1.0) - ln_gamma(big_n + 1.0);
    factorial_ratio + ln_beta(c + hyper.alpha, n_f - c + hyper.beta) - ln_beta(hyper.alpha, hyper.beta)
}

/// Log marginal prior of one matching vector. The vector must carry no
/// duplicate targets (that is a structural defect, not a zero-probability
/// state, because the marginal form already sums over distinct-target
/// matchings only).
pub fn log_z_prior(
    vector: &[usize],
    prev_total: usize,
    hyper: &ZPriorHyper,
) -> Result<f64, ModelError> {
    let mut seen = vec![false; prev_total];
    let mut links = 0usize;
    for &v in vector {
        if v < prev_total {
            if seen[v] {
                return Err(ModelError::DuplicateTargets);
            }
            seen[v] = true;
            links += 1;
        }
    }
    Ok(log_z_prior_counts(links, vector.len(), prev_total, hyper))
}

/// Log conditional prior of a new vector under the alternative construction
/// that replaces the previous-record total by the candidate count and
/// restricts support to candidate targets. Targets outside the candidate set
/// give negative infinity. Kept behind this explicit entry point for
/// property verification only: it systematically favors adding links to the
/// older vectors as more files arrive, so no sampler uses it.
pub fn log_z_prior_constrained(
    vector: &[usize],
    z_prev: &MatchingVectors,
    hyper: &ZPriorHyper,
) -> Result<f64, ModelError> {
    let candidates = linkage::candidate_set(z_prev)?;
    let prev_total = z_prev.sizes().total();
    let mut seen = vec![false; prev_total];
    let mut links = 0usize;
    for &v in vector {
        if v < prev_total {
            if seen[v] {
                return Err(ModelError::DuplicateTargets);
            }
            seen[v] = true;
            if !candidates.contains(&crate::records::GlobalIndex(v)) {
                return Ok(f64::NEG_INFINITY);
            }
            links += 1;
        }
    }
    Ok(log_z_prior_counts(
        links,
        vector.len(),
        candidates.len(),
        hyper,
    ))
}

fn dirichlet_log_kernel(probs: &[f64], hyper: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&p, &h) in probs.iter().zip(hyper.iter()) {
        if (h - 1.0).abs() < 1e-15 {
            continue;
        }
        if p < PROB_FLOOR {
            return f64::NEG_INFINITY;
        }
        total += (h - 1.0) * p.ln();
    }
    total
}

/// Unnormalized log posterior density: Dirichlet log-kernels of `m` and `u`,
/// the marginal prior of each matching vector, and the log likelihood.
pub fn log_posterior(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    mu: &MuParams,
    z: &MatchingVectors,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
) -> Result<f64, ModelError> {
    if !linkage::validate_links(z)? {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = dirichlet_log_kernel(&mu.m, &hyper.a) + dirichlet_log_kernel(&mu.u, &hyper.b);
    for v in 0..z.vector_count() {
        total += log_z_prior(z.vector(v), z.prev_total(v), z_hyper)?;
    }
    total += log_likelihood(schema, comps, mu, z)?;
    Ok(total)
}

/// Posterior Dirichlet parameters for `m` and `u`: hyperparameters plus the
/// matched and unmatched level counts respectively.
pub fn full_conditional_mu(counts: &AgreementCounts, hyper: &DirichletHyper) -> (Vec<f64>, Vec<f64>) {
    let a = hyper
        .a
        .iter()
        .zip(counts.matched.iter())
        .map(|(h, c)| h + *c as f64)
        .collect();
    let b = hyper
        .b
        .iter()
        .zip(counts.unmatched.iter())
        .map(|(h, c)| h + *c as f64)
        .collect();
    (a, b)
}

/// Per-slot log probabilities and their difference, refreshed after each
/// `m`, `u` draw and shared by every matching-vector update in an iteration.
#[derive(Debug, Clone)]
pub struct LogRatios {
    pub log_m: Vec<f64>,
    pub log_u: Vec<f64>,
}

impl LogRatios {
    pub fn new(mu: &MuParams) -> Self {
        let clamp_ln = |x: &f64| x.max(PROB_FLOOR).ln();
        LogRatios {
            log_m: mu.m.iter().map(clamp_ln).collect(),
            log_u: mu.u.iter().map(clamp_ln).collect(),
        }
    }

    /// Log likelihood ratio (matched vs unmatched) of one compared pair.
    #[inline]
    pub fn pair_llr(&self, schema: &FieldSchema, levels: &[u8]) -> f64 {
        let mut total = 0.0;
        for (f, &code) in levels.iter().enumerate() {
            let slot = schema.block_offset(f) + code as usize;
            total += self.log_m[slot] - self.log_u[slot];
        }
        total
    }
}

/// The chain of records reachable backwards from `g` (following outbound
/// links), including `g`. These are exactly the records that join the match
/// set of anything newly linked to `g`.
pub fn prefix_chain(g: usize, z: &MatchingVectors) -> Vec<usize> {
    let mut out = vec![g];
    let mut cur = g;
    while let Some(t) = z.target_of_global(cur) {
        out.push(t);
        cur = t;
    }
    out
}

/// The chain reachable forwards from `g` (following inbound links),
/// including `g`, with each member's (file, row) position.
pub fn suffix_chain(
    g: usize,
    sizes: &FileSizes,
    inbound: &InboundIndex,
) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::with_capacity(2);
    let mut cur = g;
    loop {
        let (file, row) = sizes.file_row(crate::records::GlobalIndex(cur));
        out.push((cur, file, row));
        match inbound.source_into(cur) {
            Some(src) => cur = src,
            None => break,
        }
    }
    out
}

/// Log-likelihood change from adding links between every prefix member and
/// every suffix member (negate for removal). Prefix members sit in earlier
/// files than every suffix member, so each pair has a compared row.
pub fn cross_llr(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    lr: &LogRatios,
    prefix: &[usize],
    suffix: &[(usize, usize, usize)],
) -> f64 {
    let mut total = 0.0;
    for &(_, file, row) in suffix {
        for &p in prefix {
            total += lr.pair_llr(schema, comps.pair_levels(p, file, row));
        }
    }
    total
}

/// Full conditional distribution of component `row` of vector `v`: writes
/// one probability per option into `probs`, options being link targets
/// `0..prev_total(v)` followed by the self option last. Options that would
/// give a second inbound link to some record get probability zero; the self
/// option is always valid, so the distribution always normalizes.
#[allow(clippy::too_many_arguments)]
pub fn z_component_full_conditional(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    lr: &LogRatios,
    z: &MatchingVectors,
    inbound: &InboundIndex,
    z_hyper: &ZPriorHyper,
    v: usize,
    row: usize,
    probs: &mut Vec<f64>,
) {
    let prev_total = z.prev_total(v);
    let n = z.vector(v).len();
    let own = z.self_value(v, row);
    let sizes = z.sizes();
    let suffix = suffix_chain(own, &sizes, inbound);

    let cur_target = z.target(v, row);
    let links_other = z.link_count(v) - usize::from(cur_target.is_some());
    let lp_link = log_z_prior_counts(links_other + 1, n, prev_total, z_hyper);
    let lp_self = log_z_prior_counts(links_other, n, prev_total, z_hyper);

    probs.clear();
    probs.reserve(prev_total + 1);
    let mut max = lp_self;
    for g in 0..prev_total {
        let free = match inbound.source_into(g) {
            None => true,
            Some(src) => src == own,
        };
        if !free {
            probs.push(f64::NEG_INFINITY);
            continue;
        }
        let prefix = prefix_chain(g, z);
        let lw = lp_link + cross_llr(schema, comps, lr, &prefix, &suffix);
        if lw > max {
            max = lw;
        }
        probs.push(lw);
    }
    probs.push(lp_self);
    let mut total = 0.0;
    for p in probs.iter_mut() {
        *p = (*p - max).exp();
        total += *p;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}
