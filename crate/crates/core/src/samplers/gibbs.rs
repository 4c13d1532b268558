//! Component-wise Gibbs sampling.
//!
//! Each iteration draws every `m_f`, `u_f` block from its conjugate Dirichlet
//! full conditional, then updates every matching-vector component from its
//! full conditional over all legal values. Also provides the locally
//! balanced variant, which replaces the component sweep with one
//! Metropolis-Hastings move proposal per vector.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};

use crate::comparators::ComparisonSet;
use crate::linkage::{self, MatchingVectors};
use crate::model::{self, DirichletHyper, LogRatios, MuParams, ZPriorHyper};
use crate::rng;
use crate::schema::FieldSchema;

use super::lb;
use super::state::ChainState;
use super::{Draw, Provenance, SamplePool, SamplerError};

#[derive(Debug, Clone, Copy)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
}

impl GibbsConfig {
    fn validate(&self) -> Result<(), SamplerError> {
        if self.iterations > self.burn_in {
            Ok(())
        } else {
            Err(SamplerError::BadIterations {
                iterations: self.iterations,
                burn_in: self.burn_in,
            })
        }
    }
}

/// Inverse-CDF draw from a normalized probability vector using a single
/// uniform, so identical RNG streams give identical choices everywhere.
pub(crate) fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Dirichlet draw by normalized Gamma variates, floored away from zero so
/// downstream log densities stay finite.
pub(crate) fn draw_dirichlet<R: Rng>(params: &[f64], out: &mut [f64], rng: &mut R) {
    let mut sum = 0.0;
    for (slot, &shape) in out.iter_mut().zip(params) {
        let g = Gamma::new(shape, 1.0)
            .expect("positive shape")
            .sample(rng)
            .max(model::PROB_FLOOR);
        *slot = g;
        sum += g;
    }
    for slot in out.iter_mut() {
        *slot /= sum;
    }
}

/// Draws `(m, u)` from their conjugate full conditionals given the cached
/// matched tallies and the per-slot pair totals.
pub(crate) fn draw_mu<R: Rng>(
    state: &mut ChainState,
    schema: &FieldSchema,
    hyper: &DirichletHyper,
    level_totals: &[u64],
    rng: &mut R,
) {
    let matched = state.matched().to_vec();
    let mut m = vec![0.0; schema.total_levels()];
    let mut u = vec![0.0; schema.total_levels()];
    for f in 0..schema.field_count() {
        let off = schema.block_offset(f);
        let len = schema.block_len(f);
        let a_post: Vec<f64> = (off..off + len)
            .map(|s| hyper.a[s] + matched[s] as f64)
            .collect();
        let b_post: Vec<f64> = (off..off + len)
            .map(|s| hyper.b[s] + (level_totals[s] - matched[s]) as f64)
            .collect();
        draw_dirichlet(&a_post, &mut m[off..off + len], rng);
        draw_dirichlet(&b_post, &mut u[off..off + len], rng);
    }
    state.mu = MuParams { m, u };
}

/// One full-conditional sweep over every component of vector `v`.
pub(crate) fn component_sweep_vector<R: Rng>(
    state: &mut ChainState,
    schema: &FieldSchema,
    comps: &ComparisonSet,
    z_hyper: &ZPriorHyper,
    lr: &LogRatios,
    v: usize,
    probs: &mut Vec<f64>,
    rng: &mut R,
) {
    let n = state.z().vector(v).len();
    let prev_total = state.z().prev_total(v);
    for row in 0..n {
        model::z_component_full_conditional(
            schema,
            comps,
            lr,
            state.z(),
            state.inbound(),
            z_hyper,
            v,
            row,
            probs,
        );
        let idx = sample_categorical(probs, rng);
        let value = if idx < prev_total {
            idx
        } else {
            state.z().self_value(v, row)
        };
        state.set_component(schema, comps, v, row, value);
    }
}

pub(crate) fn component_sweep_all<R: Rng>(
    state: &mut ChainState,
    schema: &FieldSchema,
    comps: &ComparisonSet,
    z_hyper: &ZPriorHyper,
    lr: &LogRatios,
    probs: &mut Vec<f64>,
    rng: &mut R,
) {
    for v in 0..state.z().vector_count() {
        component_sweep_vector(state, schema, comps, z_hyper, lr, v, probs, rng);
    }
}

pub(crate) fn initial_state(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    rng: &mut ChaCha12Rng,
) -> Result<ChainState, SamplerError> {
    let sizes = comps.sizes().clone();
    let z = MatchingVectors::unlinked(&sizes);
    let mut m = vec![0.0; schema.total_levels()];
    let mut u = vec![0.0; schema.total_levels()];
    for f in 0..schema.field_count() {
        let off = schema.block_offset(f);
        let len = schema.block_len(f);
        draw_dirichlet(&hyper.a[off..off + len], &mut m[off..off + len], rng);
        draw_dirichlet(&hyper.b[off..off + len], &mut u[off..off + len], rng);
    }
    Ok(ChainState::new(schema, comps, MuParams { m, u }, z)?)
}

pub(crate) fn record_draw(pool: &mut SamplePool, state: &ChainState) {
    if linkage::validate_links(state.z()) != Ok(true) {
        pool.validity_violations += 1;
    }
    pool.draws.push(Draw {
        m: state.mu.m.clone(),
        u: state.mu.u.clone(),
        z: state.z().clone(),
    });
    pool.matched_counts.push(state.matched().to_vec());
}

fn run_sampler(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
    cfg: GibbsConfig,
    seed: u64,
    method: &str,
    lb_block: Option<usize>,
) -> Result<SamplePool, SamplerError> {
    cfg.validate()?;
    hyper.validate(schema)?;
    z_hyper.validate()?;
    let stage = comps.file_count();
    let mut rng = rng::stream(seed, stage, method, 0);
    let mut state = initial_state(schema, comps, hyper, &mut rng)?;
    let level_totals = comps.level_totals(schema);
    let mut pool = SamplePool {
        schema_digest: schema.digest(),
        sizes: comps.sizes().clone(),
        stage,
        draws: Vec::with_capacity(cfg.iterations - cfg.burn_in),
        matched_counts: Vec::with_capacity(cfg.iterations - cfg.burn_in),
        level_totals: level_totals.clone(),
        provenance: Provenance {
            method: method.to_string(),
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            seed,
        },
        validity_violations: 0,
    };
    let mut probs = Vec::new();
    for it in 0..cfg.iterations {
        draw_mu(&mut state, schema, hyper, &level_totals, &mut rng);
        let lr = LogRatios::new(&state.mu);
        match lb_block {
            None => {
                component_sweep_all(
                    &mut state, schema, comps, z_hyper, &lr, &mut probs, &mut rng,
                );
            }
            Some(block) => {
                for v in 0..state.z().vector_count() {
                    lb::lb_step(
                        &mut state,
                        schema,
                        comps,
                        z_hyper,
                        &lr,
                        v,
                        Some(block),
                        &mut rng,
                    );
                }
            }
        }
        if it >= cfg.burn_in {
            record_draw(&mut pool, &state);
        }
    }
    debug_assert!(state.verify_cache(schema, comps).is_ok());
    Ok(pool)
}

/// Non-streaming reference sampler: component-wise Gibbs over all files.
pub fn gibbs_componentwise(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
    cfg: GibbsConfig,
    seed: u64,
) -> Result<SamplePool, SamplerError> {
    run_sampler(schema, comps, hyper, z_hyper, cfg, seed, "gibbs", None)
}

/// Gibbs sweep with locally balanced matching-vector moves instead of the
/// component sweep. Mixes slower per iteration; mainly a building block and
/// comparison target.
pub fn gibbs_lb(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
    cfg: GibbsConfig,
    block: Option<usize>,
    seed: u64,
) -> Result<SamplePool, SamplerError> {
    run_sampler(
        schema,
        comps,
        hyper,
        z_hyper,
        cfg,
        seed,
        "gibbs-lb",
        Some(block.unwrap_or(usize::MAX)),
    )
}

/// The two-file starting fit: component-wise Gibbs specialized to a corpus
/// of exactly two files.
pub fn two_file_fit(
    schema: &FieldSchema,
    comps: &ComparisonSet,
    hyper: &DirichletHyper,
    z_hyper: &ZPriorHyper,
    cfg: GibbsConfig,
    seed: u64,
) -> Result<SamplePool, SamplerError> {
    if comps.file_count() != 2 {
        return Err(SamplerError::StageMismatch {
            expected: 2,
            found: comps.file_count(),
        });
    }
    gibbs_componentwise(schema, comps, hyper, z_hyper, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{FieldValue, Record, RecordFile};
    use crate::schema::FieldDef;

    fn tiny_corpus() -> (FieldSchema, ComparisonSet) {
        let schema =
            FieldSchema::new(vec![FieldDef::text("n"), FieldDef::categorical("c")]).unwrap();
        let mk = |n: &str, c: &str| Record {
            values: vec![FieldValue::Text(n.into()), FieldValue::Text(c.into())],
        };
        let files = vec![
            RecordFile {
                records: vec![mk("ann", "x"), mk("bob", "y")],
            },
            RecordFile {
                records: vec![mk("ann", "x"), mk("zed", "q")],
            },
        ];
        (schema.clone(), ComparisonSet::build(&schema, &files).unwrap())
    }

    #[test]
    fn rejects_burn_in_at_least_iterations() {
        let (schema, comps) = tiny_corpus();
        let hyper = DirichletHyper::flat(&schema);
        let z_hyper = ZPriorHyper::default();
        let cfg = GibbsConfig {
            iterations: 10,
            burn_in: 10,
        };
        assert!(matches!(
            gibbs_componentwise(&schema, &comps, &hyper, &z_hyper, cfg, 1),
            Err(SamplerError::BadIterations { .. })
        ));
    }

    #[test]
    fn chain_stays_valid_and_reproducible() {
        let (schema, comps) = tiny_corpus();
        let hyper = DirichletHyper::flat(&schema);
        let z_hyper = ZPriorHyper::default();
        let cfg = GibbsConfig {
            iterations: 200,
            burn_in: 50,
        };
        let a = gibbs_componentwise(&schema, &comps, &hyper, &z_hyper, cfg, 9).unwrap();
        let b = gibbs_componentwise(&schema, &comps, &hyper, &z_hyper, cfg, 9).unwrap();
        assert_eq!(a.validity_violations, 0);
        assert_eq!(a.len(), 150);
        assert_eq!(a.draws[17], b.draws[17]);
        for d in &a.draws {
            assert_eq!(linkage::validate_links(&d.z), Ok(true));
        }
    }

    #[test]
    fn link_averse_prior_keeps_chain_near_zero_links() {
        let (schema, comps) = tiny_corpus();
        let hyper = DirichletHyper::flat(&schema);
        // alpha tiny, beta huge: prior link propensity effectively zero
        let z_hyper = ZPriorHyper {
            alpha: 1e-6,
            beta: 1e6,
        };
        let cfg = GibbsConfig {
            iterations: 400,
            burn_in: 100,
        };
        let pool = gibbs_componentwise(&schema, &comps, &hyper, &z_hyper, cfg, 3).unwrap();
        let linked_draws = pool
            .draws
            .iter()
            .filter(|d| d.z.total_links() > 0)
            .count();
        assert!(
            linked_draws * 20 < pool.len(),
            "{linked_draws} of {} draws carried links",
            pool.len()
        );
    }

    #[test]
    fn two_file_fit_requires_two_files() {
        let schema = FieldSchema::new(vec![FieldDef::categorical("c")]).unwrap();
        let mk = |c: &str| Record {
            values: vec![FieldValue::Text(c.into())],
        };
        let files = vec![
            RecordFile {
                records: vec![mk("a")],
            },
            RecordFile {
                records: vec![mk("a")],
            },
            RecordFile {
                records: vec![mk("b")],
            },
        ];
        let comps = ComparisonSet::build(&schema, &files).unwrap();
        let hyper = DirichletHyper::flat(&schema);
        let cfg = GibbsConfig {
            iterations: 10,
            burn_in: 2,
        };
        assert!(matches!(
            two_file_fit(&schema, &comps, &hyper, &ZPriorHyper::default(), cfg, 1),
            Err(SamplerError::StageMismatch { .. })
        ));
    }

    #[test]
    fn identical_singletons_with_informative_prior_link_often() {
        let schema =
            FieldSchema::new(vec![FieldDef::text("n"), FieldDef::categorical("c")]).unwrap();
        let mk = |n: &str, c: &str| Record {
            values: vec![FieldValue::Text(n.into()), FieldValue::Text(c.into())],
        };
        let files = vec![
            RecordFile {
                records: vec![mk("maddison", "f")],
            },
            RecordFile {
                records: vec![mk("maddison", "f")],
            },
        ];
        let comps = ComparisonSet::build(&schema, &files).unwrap();
        let hyper = DirichletHyper::informative(&schema, &[0.5, 0.125], 12.0).unwrap();
        let cfg = GibbsConfig {
            iterations: 2000,
            burn_in: 500,
        };
        let pool =
            two_file_fit(&schema, &comps, &hyper, &ZPriorHyper::default(), cfg, 5).unwrap();
        let linked = pool.draws.iter().filter(|d| d.z.total_links() == 1).count();
        assert!(
            linked as f64 / pool.len() as f64 > 0.5,
            "posterior link probability {} not above one half",
            linked as f64 / pool.len() as f64
        );
    }
}
