//! Streaming update of an independent sample ensemble.
//!
//! Each member is advanced in isolation: a jumping pass initializes the new
//! file's matching vector from its full conditional, then a transition kernel
//! targeting the updated posterior refines everything. Members never exchange
//! state, so the final ensemble is a set of independent draws; member RNG
//! streams are derived from (seed, stage, member index), making results
//! bit-identical no matter how many worker threads run the update.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::ComparisonSet;
use crate::linkage::{self, MatchingVectors};
use crate::model::{DirichletHyper, LogRatios, MuParams, ZPriorHyper};
use crate::rng;
use crate::schema::FieldSchema;

use super::gibbs::{component_sweep_all, component_sweep_vector, draw_mu};
use super::lb;
use super::state::ChainState;
use super::{Draw, Ensemble, Provenance, SamplerError};

/// Proposal style for the jumping and transition kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// Full-conditional component sweeps everywhere.
    Component,
    /// Locally balanced moves everywhere.
    LocallyBalanced,
    /// Component-wise jumping, locally balanced transitions.
    Mixed,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Component => "smcmc-comp",
            KernelKind::LocallyBalanced => "smcmc-lb",
            KernelKind::Mixed => "smcmc-mixed",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SmcmcConfig {
    pub kernel: KernelKind,
    pub jump_iterations: usize,
    pub transition_iterations: usize,
    pub block_size: Option<usize>,
    pub workers: usize,
}

/// Per-member accounting from one update.
#[derive(Debug, Clone)]
pub struct SmcmcReport {
    /// Serial compute time of each member, for per-worker cost accounting.
    pub member_seconds: Vec<f64>,
    /// Set when the transition kernel was skipped entirely; jump-only
    /// ensembles do not target the updated posterior.
    pub jump_only: bool,
}

struct MemberResult {
    draw: Draw,
    matched: Vec<u64>,
    valid: bool,
    seconds: f64,
}

#[allow(clippy::too_many_arguments)]
fn update_member(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
    cfg: &SmcmcConfig,
    level_totals: &[u64],
    member: &Draw,
    old_matched: &[u64],
    seed: u64,
    stage: usize,
    index: usize,
) -> Result<MemberResult, SamplerError> {
    let start = Instant::now();
    let mut rng = rng::stream(seed, stage, "smcmc-member", index as u64);
    let sizes = comps.sizes().clone();
    let new_file = stage - 1;
    let old_total = member.z.sizes().total();

    let mut vectors: Vec<Vec<usize>> = member.z.vectors().to_vec();
    vectors.push((0..sizes.size(new_file)).map(|j| old_total + j).collect());
    let z = MatchingVectors::from_vectors(&sizes, vectors)?;
    let mu = MuParams {
        m: member.m.clone(),
        u: member.u.clone(),
    };
    let mut state = ChainState::from_cached(z, mu, old_matched.to_vec())?;
    let v_last = state.z().vector_count() - 1;
    let mut probs = Vec::new();

    // jumping kernel: initialize the newest vector given the member's
    // parameters and all data
    let lr = LogRatios::new(&state.mu);
    for _ in 0..cfg.jump_iterations {
        match cfg.kernel {
            KernelKind::Component | KernelKind::Mixed => {
                component_sweep_vector(
                    &mut state, schema, comps, z_hyper, &lr, v_last, &mut probs, &mut rng,
                );
            }
            KernelKind::LocallyBalanced => {
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
            }
        }
    }

    // transition kernel: full sweeps targeting the updated posterior
    for _ in 0..cfg.transition_iterations {
        draw_mu(&mut state, schema, hyper, level_totals, &mut rng);
        let lr = LogRatios::new(&state.mu);
        match cfg.kernel {
            KernelKind::Component => {
                component_sweep_all(
                    &mut state, schema, comps, z_hyper, &lr, &mut probs, &mut rng,
                );
            }
            KernelKind::LocallyBalanced | KernelKind::Mixed => {
                for v in 0..state.z().vector_count() {
                    lb::lb_step(
                        &mut state,
                        schema,
                        comps,
                        z_hyper,
                        &lr,
                        v,
                        cfg.block_size,
                        &mut rng,
                    );
                }
            }
        }
    }

    let valid = linkage::validate_links(state.z()) == Ok(true);
    Ok(MemberResult {
        draw: Draw {
            m: state.mu.m.clone(),
            u: state.mu.u.clone(),
            z: state.z().clone(),
        },
        matched: state.matched().to_vec(),
        valid,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Advances every ensemble member to the posterior that includes the newest
/// file. `comps` must cover one file more than the ensemble's stage.
pub fn smcmc_update(
    schema: &FieldSchema,
    ensemble: &Ensemble,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
    cfg: SmcmcConfig,
    seed: u64,
) -> Result<(Ensemble, SmcmcReport), SamplerError> {
    if ensemble.is_empty() {
        return Err(SamplerError::EmptyEnsemble);
    }
    let stage = comps.file_count();
    if ensemble.stage + 1 != stage {
        return Err(SamplerError::StageMismatch {
            expected: ensemble.stage + 1,
            found: stage,
        });
    }
    hyper.validate(schema)?;
    z_hyper.validate()?;
    let level_totals = comps.level_totals(schema);

    let thread_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .expect("worker pool");
    let results: Result<Vec<MemberResult>, SamplerError> = thread_pool.install(|| {
        ensemble
            .members
            .par_iter()
            .zip(ensemble.matched_counts.par_iter())
            .enumerate()
            .map(|(idx, (member, old_matched))| {
                update_member(
                    schema,
                    comps,
                    hyper,
                    z_hyper,
                    &cfg,
                    &level_totals,
                    member,
                    old_matched,
                    seed,
                    stage,
                    idx,
                )
            })
            .collect()
    });
    let results = results?;

    let mut members = Vec::with_capacity(results.len());
    let mut matched_counts = Vec::with_capacity(results.len());
    let mut member_seconds = Vec::with_capacity(results.len());
    let mut violations = 0usize;
    for r in results {
        if !r.valid {
            violations += 1;
        }
        members.push(r.draw);
        matched_counts.push(r.matched);
        member_seconds.push(r.seconds);
    }
    let out = Ensemble {
        schema_digest: schema.digest(),
        sizes: comps.sizes().clone(),
        stage,
        members,
        matched_counts,
        level_totals,
        provenance: Provenance {
            method: cfg.kernel.name().to_string(),
            iterations: cfg.transition_iterations,
            burn_in: 0,
            seed,
        },
        validity_violations: violations,
    };
    Ok((
        out,
        SmcmcReport {
            member_seconds,
            jump_only: cfg.transition_iterations == 0,
        },
    ))
}
