//! Posterior samplers.
//!
//! Four inference engines share one state representation:
//!
//! - [`gibbs`]: component-wise Gibbs, usable both as the non-streaming
//!   reference fit over all files and as the two-file starting fit.
//! - [`lb`]: locally balanced move proposals for matching vectors, used as a
//!   Metropolis-Hastings step inside the other samplers.
//! - [`pprb`]: streaming update that resamples the previous stage's draws as
//!   independent Metropolis proposals inside a Gibbs sweep.
//! - [`smcmc`]: streaming update that advances an independent ensemble, one
//!   jumping pass to initialize the new matching vector and then a transition
//!   kernel targeting the updated posterior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linkage::{LinkageError, MatchingVectors};
use crate::model::ModelError;
use crate::records::FileSizes;

pub mod gibbs;
pub mod lb;
pub mod pprb;
pub mod smcmc;
mod state;

pub use gibbs::{gibbs_componentwise, gibbs_lb, two_file_fit, GibbsConfig};
pub use lb::{lb_propose, BlockConfig, Move, MoveProposal};
pub use pprb::{pprb_within_gibbs_update, PprbConfig};
pub use smcmc::{smcmc_update, KernelKind, SmcmcConfig, SmcmcReport};
pub use state::ChainState;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("iterations ({iterations}) must exceed burn-in ({burn_in})")]
    BadIterations { iterations: usize, burn_in: usize },
    #[error("sample pool is empty")]
    EmptyPool,
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("store covers {found} files, expected {expected}")]
    StageMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linkage(#[from] LinkageError),
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    pub z: MatchingVectors,
}

/// How a stored set of draws was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// Retained draws from one chain, with the per-draw sufficient statistics a
/// later streaming update needs.
///
/// `matched_counts[s]` tallies comparison levels over the matched pairs of
/// draw `s` across all data at this stage; together with `level_totals` it
/// determines the full conditional Dirichlet parameters of `(m, u)` given
/// this stage's data, which is exactly the precomputed quantity the
/// pool-resampling acceptance ratio consumes.
#[derive(Debug, Clone)]
pub struct SamplePool {
    pub schema_digest: [u8; 32],
    pub sizes: FileSizes,
    /// Number of files assimilated.
    pub stage: usize,
    pub draws: Vec<Draw>,
    pub matched_counts: Vec<Vec<u64>>,
    pub level_totals: Vec<u64>,
    pub provenance: Provenance,
    /// Recorded states that violated the link validity constraint. Always
    /// zero for a correct sampler; tracked so test suites can assert it.
    pub validity_violations: usize,
}

impl SamplePool {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Reinterprets stored draws as ensemble members.
    pub fn into_ensemble(self) -> Ensemble {
        Ensemble {
            schema_digest: self.schema_digest,
            sizes: self.sizes,
            stage: self.stage,
            members: self.draws,
            matched_counts: self.matched_counts,
            level_totals: self.level_totals,
            provenance: self.provenance,
            validity_violations: self.validity_violations,
        }
    }
}

/// An independent ensemble of states, one per member.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub schema_digest: [u8; 32],
    pub sizes: FileSizes,
    pub stage: usize,
    pub members: Vec<Draw>,
    pub matched_counts: Vec<Vec<u64>>,
    pub level_totals: Vec<u64>,
    pub provenance: Provenance,
    pub validity_violations: usize,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Seeds an ensemble from chain draws by taking `size` evenly spaced
    /// draws (the widest spacing the pool allows, to minimize correlation
    /// between members).
    pub fn from_pool_thinned(pool: &SamplePool, size: usize) -> Result<Self, SamplerError> {
        if pool.is_empty() || size == 0 {
            return Err(SamplerError::EmptyPool);
        }
        let size = size.min(pool.len());
        let mut members = Vec::with_capacity(size);
        let mut matched = Vec::with_capacity(size);
        for i in 0..size {
            // spread indices over [0, len): floor(i * len / size) are distinct
            let idx = i * pool.len() / size;
            members.push(pool.draws[idx].clone());
            matched.push(pool.matched_counts[idx].clone());
        }
        Ok(Ensemble {
            schema_digest: pool.schema_digest,
            sizes: pool.sizes.clone(),
            stage: pool.stage,
            members,
            matched_counts: matched,
            level_totals: pool.level_totals.clone(),
            provenance: pool.provenance.clone(),
            validity_violations: pool.validity_violations,
        })
    }

    /// Treats ensemble members as a proposal pool.
    pub fn into_pool(self) -> SamplePool {
        SamplePool {
            schema_digest: self.schema_digest,
            sizes: self.sizes,
            stage: self.stage,
            draws: self.members,
            matched_counts: self.matched_counts,
            level_totals: self.level_totals,
            provenance: self.provenance,
            validity_violations: self.validity_violations,
        }
    }
}
