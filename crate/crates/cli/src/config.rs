//! Run configuration: one JSON document with sections per subsystem.

use std::path::Path;

use serde::{Deserialize, Serialize};

use linkstream::model::{DirichletHyper, ZPriorHyper};
use linkstream::schema::{FieldDef, FieldKind, FieldSchema};
use linkstream::synthgen::GenConfig;

use crate::error::CliError;

/// Sampler selection for `fit` and `update`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Method {
    Gibbs,
    Pprb,
    SmcmcComp,
    SmcmcLb,
    SmcmcMixed,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gibbs => "gibbs",
            Method::Pprb => "pprb",
            Method::SmcmcComp => "smcmc-comp",
            Method::SmcmcLb => "smcmc-lb",
            Method::SmcmcMixed => "smcmc-mixed",
        }
    }

    pub fn is_streaming(self) -> bool {
        !matches!(self, Method::Gibbs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    #[default]
    Flat,
    Weak,
    Strong,
    Explicit,
}

fn default_p_text() -> f64 {
    0.5
}

fn default_p_categorical() -> f64 {
    0.125
}

fn one() -> f64 {
    1.0
}

/// Prior section. `weak` and `strong` build the informative `m` prior from
/// per-field error probabilities at strengths 12 and 120; `explicit` takes a
/// strength (and optionally probabilities) directly, or raw `a`/`b` vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub kind: PriorKind,
    pub strength: Option<f64>,
    pub error_prob_text: f64,
    pub error_prob_categorical: f64,
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub alpha_pi: f64,
    pub beta_pi: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            kind: PriorKind::Flat,
            strength: None,
            error_prob_text: default_p_text(),
            error_prob_categorical: default_p_categorical(),
            a: None,
            b: None,
            alpha_pi: one(),
            beta_pi: one(),
        }
    }
}

impl PriorConfig {
    pub fn build(&self, schema: &FieldSchema) -> Result<(DirichletHyper, ZPriorHyper), CliError> {
        let z_hyper = ZPriorHyper {
            alpha: self.alpha_pi,
            beta: self.beta_pi,
        };
        z_hyper
            .validate()
            .map_err(|e| CliError::Config(format!("link propensity prior: {e}")))?;
        let error_probs: Vec<f64> = schema
            .fields()
            .iter()
            .map(|f| match f.kind {
                FieldKind::Text { .. } => self.error_prob_text,
                _ => self.error_prob_categorical,
            })
            .collect();
        let hyper = match self.kind {
            PriorKind::Flat => DirichletHyper::flat(schema),
            PriorKind::Weak => DirichletHyper::informative(schema, &error_probs, 12.0)
                .map_err(|e| CliError::Config(e.to_string()))?,
            PriorKind::Strong => DirichletHyper::informative(schema, &error_probs, 120.0)
                .map_err(|e| CliError::Config(e.to_string()))?,
            PriorKind::Explicit => match (&self.a, &self.b) {
                (Some(a), Some(b)) => DirichletHyper {
                    a: a.clone(),
                    b: b.clone(),
                },
                _ => {
                    let s = self.strength.ok_or_else(|| {
                        CliError::Config(
                            "explicit prior needs either a/b vectors or a strength".into(),
                        )
                    })?;
                    DirichletHyper::informative(schema, &error_probs, s)
                        .map_err(|e| CliError::Config(e.to_string()))?
                }
            },
        };
        hyper
            .validate(schema)
            .map_err(|e| CliError::Config(format!("dirichlet prior: {e}")))?;
        Ok((hyper, z_hyper))
    }
}

fn default_block_fraction() -> f64 {
    0.375
}

fn default_ensemble() -> usize {
    200
}

/// Sampler section. Iteration counts left unset resolve to per-method
/// defaults; the locally balanced block size defaults to a fraction of the
/// newest file's size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub method: Method,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub ensemble_size: usize,
    pub jump_iterations: Option<usize>,
    pub transition_iterations: Option<usize>,
    pub block_size: Option<usize>,
    pub block_fraction: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: Method::Gibbs,
            iterations: None,
            burn_in: None,
            ensemble_size: default_ensemble(),
            jump_iterations: None,
            transition_iterations: None,
            block_size: None,
            block_fraction: default_block_fraction(),
        }
    }
}

impl SamplerConfig {
    /// Iterations and burn-in for chain methods (MCMC defaults 2500/500; the
    /// pool-resampling update runs longer, 5000/1000).
    pub fn chain_iterations(&self, method: Method) -> Result<(usize, usize), CliError> {
        let (di, db) = match method {
            Method::Pprb => (5000, 1000),
            _ => (2500, 500),
        };
        let iterations = self.iterations.unwrap_or(di);
        let burn_in = self.burn_in.unwrap_or(db);
        if iterations <= burn_in {
            return Err(CliError::Config(format!(
                "iterations ({iterations}) must exceed burn-in ({burn_in})"
            )));
        }
        Ok((iterations, burn_in))
    }

    /// Jumping and transition iteration counts per ensemble kernel.
    pub fn smcmc_iterations(&self, method: Method) -> Result<(usize, usize), CliError> {
        let (dj, dt) = match method {
            Method::SmcmcComp => (5, 50),
            Method::SmcmcLb => (50, 200),
            Method::SmcmcMixed => (5, 200),
            _ => return Err(CliError::Config(format!("{} is not an ensemble method", method.name()))),
        };
        Ok((
            self.jump_iterations.unwrap_or(dj),
            self.transition_iterations.unwrap_or(dt),
        ))
    }

    /// Locally balanced block size for a stage whose newest file has
    /// `n_new` records.
    pub fn resolve_block(&self, n_new: usize) -> usize {
        self.block_size
            .unwrap_or_else(|| ((self.block_fraction * n_new as f64).round() as usize).max(1))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.ensemble_size == 0 {
            return Err(CliError::Config("ensemble size must be positive".into()));
        }
        if !(self.block_fraction > 0.0) {
            return Err(CliError::Config("block fraction must be positive".into()));
        }
        Ok(())
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub schema: Option<Vec<FieldDef>>,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
    pub simulate: GenConfig,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let bytes = std::fs::read(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                let config: RunConfig = serde_json::from_slice(&bytes)
                    .map_err(|e| CliError::Config(format!("bad config {}: {e}", p.display())))?;
                config.sampler.validate()?;
                Ok(config)
            }
        }
    }

    pub fn schema(&self) -> Result<FieldSchema, CliError> {
        match &self.schema {
            None => Ok(linkstream::synthgen::default_schema()),
            Some(fields) => FieldSchema::new(fields.clone())
                .map_err(|e| CliError::Config(format!("schema: {e}"))),
        }
    }

    /// Seed precedence: command line, then config, then zero.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    /// Worker precedence: command line, then environment, then config, then
    /// the machine's parallelism.
    pub fn workers(&self, flag: Option<usize>) -> usize {
        flag.or_else(|| {
            std::env::var("LINKSTREAM_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .or(self.workers)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
    }

    /// Digest over the model-defining sections (schema and priors); streaming
    /// stages must agree on it.
    pub fn model_digest(&self, schema: &FieldSchema) -> Result<String, CliError> {
        let (hyper, z_hyper) = self.priors.build(schema)?;
        let doc = serde_json::json!({
            "schema": schema.fields(),
            "a": hyper.a,
            "b": hyper.b,
            "alpha_pi": z_hyper.alpha,
            "beta_pi": z_hyper.beta,
        });
        Ok(linkstream::store::sha256_hex(
            serde_json::to_string(&doc)
                .map_err(|e| CliError::Config(e.to_string()))?
                .as_bytes(),
        ))
    }
}
