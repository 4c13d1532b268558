//! Streaming update by resampling the previous stage's posterior draws.
//!
//! When file `k` arrives, the old matching vectors are updated by proposing
//! whole configurations uniformly from the stored pool and accepting with a
//! ratio that needs only (a) the new file's likelihood under the proposed and
//! current old vectors and (b) the full conditional density of the current
//! `(m, u)` given the *old* data at both configurations. The second factor's
//! sufficient statistics are the per-draw matched tallies recorded when the
//! pool was written, so no old comparison data is touched here.
//!
//! Each iteration therefore runs: conjugate `(m, u)` draw — pool resampling
//! step for the old vectors — one locally balanced Metropolis-Hastings move
//! on the newest vector.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::comparators::ComparisonSet;
use crate::linkage::MatchingVectors;
use crate::model::{DirichletHyper, LogRatios, MuParams, ZPriorHyper};
use crate::model::{prefix_chain};
use crate::rng;
use crate::schema::FieldSchema;

use super::gibbs::{draw_mu, record_draw};
use super::lb;
use super::state::ChainState;
use super::{Provenance, SamplePool, SamplerError};

#[derive(Debug, Clone, Copy)]
pub struct PprbConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Block size for the newest vector's locally balanced moves.
    pub block_size: Option<usize>,
}

/// Log normalizer of the Dirichlet full conditional of `(m, u)` given data
/// with the given matched tallies.
fn full_conditional_log_norm(
    schema: &FieldSchema,
    hyper: &DirichletHyper,
    matched: &[u64],
    level_totals: &[u64],
) -> f64 {
    let mut total = 0.0;
    for f in 0..schema.field_count() {
        let off = schema.block_offset(f);
        let len = schema.block_len(f);
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        for s in off..off + len {
            let a = hyper.a[s] + matched[s] as f64;
            let b = hyper.b[s] + (level_totals[s] - matched[s]) as f64;
            sum_a += a;
            sum_b += b;
            total -= ln_gamma(a) + ln_gamma(b);
        }
        total += ln_gamma(sum_a) + ln_gamma(sum_b);
    }
    total
}

/// Log likelihood contribution of the matched pairs between the newest file
/// and everything earlier, with backward chains taken from `old_z`.
fn newdata_matched_llr(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    lr: &LogRatios,
    old_z: &MatchingVectors,
    new_file: usize,
    last_targets: &[Option<usize>],
) -> f64 {
    let mut total = 0.0;
    for (row, t) in last_targets.iter().enumerate() {
        if let Some(t) = t {
            for p in prefix_chain(*t, old_z) {
                total += lr.pair_llr(schema, comps.pair_levels(p, new_file, row));
            }
        }
    }
    total
}

/// Streaming posterior update from a stored pool covering one file fewer
/// than `comps`. Produces a new pool at the extended stage.
pub fn pprb_within_gibbs_update(
    schema: &FieldSchema,
    pool: &SamplePool,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
    cfg: PprbConfig,
    seed: u64,
) -> Result<SamplePool, SamplerError> {
    if pool.is_empty() {
        return Err(SamplerError::EmptyPool);
    }
    if cfg.iterations <= cfg.burn_in {
        return Err(SamplerError::BadIterations {
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
        });
    }
    let stage = comps.file_count();
    if pool.stage + 1 != stage {
        return Err(SamplerError::StageMismatch {
            expected: pool.stage + 1,
            found: stage,
        });
    }
    hyper.validate(schema)?;
    z_hyper.validate()?;

    let sizes = comps.sizes().clone();
    let old_total = pool.sizes.total();
    let new_file = stage - 1;
    let n_new = sizes.size(new_file);
    let pool_size = pool.len();

    // precomputed per draw: inbound-target mask and full conditional log
    // normalizer of (m, u) given the old data
    let mut target_masks: Vec<Vec<bool>> = Vec::with_capacity(pool_size);
    let mut log_norms: Vec<f64> = Vec::with_capacity(pool_size);
    for s in 0..pool_size {
        let z = &pool.draws[s].z;
        let mut mask = vec![false; old_total];
        for v in 0..z.vector_count() {
            for row in 0..z.vector(v).len() {
                if let Some(t) = z.target(v, row) {
                    mask[t] = true;
                }
            }
        }
        target_masks.push(mask);
        log_norms.push(full_conditional_log_norm(
            schema,
            hyper,
            &pool.matched_counts[s],
            &pool.level_totals,
        ));
    }

    let mut rng = rng::stream(seed, stage, "pprb", 0);
    let mut cur = rng.random_range(0..pool_size);

    // state over all k files: old vectors from the initial draw, newest
    // vector unlinked, so the old tallies carry over unchanged
    let mut vectors: Vec<Vec<usize>> = pool.draws[cur].z.vectors().to_vec();
    vectors.push((0..n_new).map(|j| old_total + j).collect());
    let z = MatchingVectors::from_vectors(&sizes, vectors)?;
    let mu = MuParams {
        m: pool.draws[cur].m.clone(),
        u: pool.draws[cur].u.clone(),
    };
    let mut state = ChainState::from_cached(z, mu, pool.matched_counts[cur].clone())?;
    let v_last = state.z().vector_count() - 1;

    let level_totals = comps.level_totals(schema);
    let mut out = SamplePool {
        schema_digest: schema.digest(),
        sizes: sizes.clone(),
        stage,
        draws: Vec::with_capacity(cfg.iterations - cfg.burn_in),
        matched_counts: Vec::with_capacity(cfg.iterations - cfg.burn_in),
        level_totals: level_totals.clone(),
        provenance: Provenance {
            method: "pprb".to_string(),
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            seed,
        },
        validity_violations: 0,
    };

    let mut last_targets: Vec<Option<usize>> = vec![None; n_new];
    for it in 0..cfg.iterations {
        draw_mu(&mut state, schema, hyper, &level_totals, &mut rng);
        let lr = LogRatios::new(&state.mu);

        // pool resampling step for the old vectors
        let proposal = rng.random_range(0..pool_size);
        if proposal != cur {
            for row in 0..n_new {
                last_targets[row] = state.z().target(v_last, row);
            }
            let conflict = last_targets
                .iter()
                .flatten()
                .any(|&t| target_masks[proposal][t]);
            if !conflict {
                let like_new = newdata_matched_llr(
                    schema,
                    comps,
                    &lr,
                    &pool.draws[proposal].z,
                    new_file,
                    &last_targets,
                );
                let like_cur =
                    newdata_matched_llr(schema, comps, &lr, state.z(), new_file, &last_targets);
                let mut log_alpha = like_new - like_cur + log_norms[proposal] - log_norms[cur];
                for slot in 0..schema.total_levels() {
                    let dcount = pool.matched_counts[proposal][slot] as f64
                        - pool.matched_counts[cur][slot] as f64;
                    if dcount != 0.0 {
                        log_alpha += dcount * (lr.log_m[slot] - lr.log_u[slot]);
                    }
                }
                if rng.random::<f64>().ln() < log_alpha {
                    state.replace_old_vectors(
                        schema,
                        comps,
                        &pool.draws[proposal].z,
                        &pool.matched_counts[proposal],
                    );
                    cur = proposal;
                }
            }
        }

        // newest vector: one locally balanced MH move
        lb::lb_step(
            &mut state,
            schema,
            comps,
            z_hyper,
            &lr,
            v_last,
            cfg.block_size,
            &mut rng,
        );

        if it >= cfg.burn_in {
            record_draw(&mut out, &state);
        }
    }
    debug_assert!(state.verify_cache(schema, comps).is_ok());
    Ok(out)
}
