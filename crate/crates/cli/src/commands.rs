//! Command implementations behind the CLI verbs.

use std::path::{Path, PathBuf};

use linkstream::comparators::{ComparisonMatrix, ComparisonSet};
use linkstream::evaluation::{self, GroundTruth};
use linkstream::records::{read_record_csv_path, write_record_csv, RecordFile};
use linkstream::samplers::{
    gibbs_componentwise, pprb_within_gibbs_update, smcmc_update, two_file_fit, Ensemble,
    GibbsConfig, KernelKind, PprbConfig, SamplePool, SmcmcConfig,
};
use linkstream::schema::FieldSchema;
use linkstream::store::{self, StoreKind};
use linkstream::synthgen;

use crate::config::{Method, RunConfig};
use crate::error::CliError;
use crate::manifest::{
    gamma_name, FileEntry, SamplerSnapshot, StageManifest, STORE_NAME,
};

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn ingest(schema: &FieldSchema, paths: &[PathBuf]) -> Result<Vec<RecordFile>, CliError> {
    let mut files = Vec::with_capacity(paths.len());
    for p in paths {
        let file = read_record_csv_path(schema, p)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        files.push(file);
    }
    Ok(files)
}

/// `simulate`: write a synthetic corpus (one CSV per file plus the truth).
pub fn cmd_simulate(
    config: &RunConfig,
    out: &Path,
    seed_flag: Option<u64>,
) -> Result<Vec<PathBuf>, CliError> {
    let seed = config.seed(seed_flag);
    let schema = config.schema()?;
    let (corpus, truth) = synthgen::generate_corpus(&schema, &config.simulate, seed)?;
    ensure_dir(out)?;
    let mut written = Vec::new();
    for (i, file) in corpus.files.iter().enumerate() {
        let path = out.join(format!("file_{}.csv", i + 1));
        let handle = std::fs::File::create(&path)?;
        write_record_csv(&schema, file, handle)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    let truth_path = out.join("truth.csv");
    truth.write_csv(std::fs::File::create(&truth_path)?)?;
    written.push(truth_path);

    let entries: Result<Vec<FileEntry>, CliError> =
        written.iter().map(|p| FileEntry::new(p)).collect();
    let doc = serde_json::json!({
        "seed": seed,
        "simulate": &config.simulate,
        "schema": schema.fields(),
        "files": entries?,
    });
    std::fs::write(
        out.join("simulation.json"),
        serde_json::to_vec_pretty(&doc)?,
    )?;
    println!(
        "simulated {} files of {:?} records into {}",
        config.simulate.files,
        corpus.sizes().0,
        out.display()
    );
    Ok(written)
}

/// `compare`: build and persist the comparison container for one new file
/// against the previous files.
pub fn cmd_compare(
    config: &RunConfig,
    previous: &[PathBuf],
    new_file: &Path,
    out: &Path,
    export_csv: bool,
) -> Result<PathBuf, CliError> {
    if previous.is_empty() {
        return Err(CliError::Config("compare needs at least one previous file".into()));
    }
    let schema = config.schema()?;
    let prev_files = ingest(&schema, previous)?;
    let new = ingest(&schema, std::slice::from_ref(&new_file.to_path_buf()))?.remove(0);
    let refs: Vec<&RecordFile> = prev_files.iter().collect();
    let matrix = ComparisonMatrix::build(&schema, &refs, &new)?;
    ensure_dir(out)?;
    let path = out.join(gamma_name(previous.len() + 1));
    matrix.write_to(std::fs::File::create(&path)?)?;
    if export_csv {
        let csv_path = path.with_extension("csv");
        matrix.write_csv(&schema, std::fs::File::create(&csv_path)?)?;
    }
    println!(
        "compared {} pairs into {}",
        matrix.row_count(),
        path.display()
    );
    Ok(path)
}

fn write_stage(
    out: &Path,
    schema: &FieldSchema,
    input_files: Vec<FileEntry>,
    matrices: &[ComparisonMatrix],
    kind: StoreKind,
    pool: Option<&SamplePool>,
    ensemble: Option<&Ensemble>,
    sampler: SamplerSnapshot,
    seed: u64,
    model_digest: String,
    lineage: Option<String>,
) -> Result<StageManifest, CliError> {
    ensure_dir(out)?;
    let mut comparison_files = Vec::with_capacity(matrices.len());
    for m in matrices {
        let path = out.join(gamma_name(m.new_file));
        m.write_to(std::fs::File::create(&path)?)?;
        comparison_files.push(FileEntry::new(&path)?);
    }
    let store_path = out.join(STORE_NAME);
    let draws = match kind {
        StoreKind::Pool => {
            let p = pool.expect("pool present for pool kind");
            store::write_pool_path(&store_path, p)?;
            p.len()
        }
        StoreKind::Ensemble => {
            let e = ensemble.expect("ensemble present for ensemble kind");
            store::write_ensemble_path(&store_path, e)?;
            e.len()
        }
    };
    let manifest = StageManifest {
        format_version: 1,
        stage: match kind {
            StoreKind::Pool => pool.expect("pool present").stage,
            StoreKind::Ensemble => ensemble.unwrap().stage,
        },
        input_files,
        comparison_files,
        store_file: FileEntry::new(&store_path)?,
        store_kind: match kind {
            StoreKind::Pool => "pool".into(),
            StoreKind::Ensemble => "ensemble".into(),
        },
        model_digest,
        sampler,
        seed,
        draws,
        lineage,
    };
    manifest.write(out)?;
    let _ = schema;
    Ok(manifest)
}

/// `fit`: the two-file starting fit, persisted as stage 2.
pub fn cmd_fit(
    config: &RunConfig,
    file1: &Path,
    file2: &Path,
    out: &Path,
    seed_flag: Option<u64>,
) -> Result<StageManifest, CliError> {
    let seed = config.seed(seed_flag);
    let schema = config.schema()?;
    let (hyper, z_hyper) = config.priors.build(&schema)?;
    config.sampler.validate()?;
    let (iterations, burn_in) = config.sampler.chain_iterations(Method::Gibbs)?;

    let paths = vec![file1.to_path_buf(), file2.to_path_buf()];
    let input_files: Result<Vec<FileEntry>, CliError> =
        paths.iter().map(|p| FileEntry::new(p)).collect();
    let files = ingest(&schema, &paths)?;
    let comps = ComparisonSet::build(&schema, &files)?;
    let pool = two_file_fit(
        &schema,
        &comps,
        &hyper,
        &z_hyper,
        GibbsConfig { iterations, burn_in },
        seed,
    )?;
    let manifest = write_stage(
        out,
        &schema,
        input_files?,
        comps.matrices(),
        StoreKind::Pool,
        Some(&pool),
        None,
        SamplerSnapshot {
            method: "gibbs".into(),
            iterations,
            burn_in,
            ensemble_size: None,
            jump_iterations: None,
            transition_iterations: None,
            block_size: None,
        },
        seed,
        config.model_digest(&schema)?,
        None,
    )?;
    println!(
        "fit stage 2: {} draws ({} iterations, {} burn-in) -> {}",
        manifest.draws,
        iterations,
        burn_in,
        out.display()
    );
    Ok(manifest)
}

/// `update`: assimilate one new file into a prior stage's posterior.
#[allow(clippy::too_many_arguments)]
pub fn cmd_update(
    config: &RunConfig,
    new_file: &Path,
    prior_dir: &Path,
    out: &Path,
    method_flag: Option<Method>,
    workers_flag: Option<usize>,
    seed_flag: Option<u64>,
) -> Result<StageManifest, CliError> {
    let method = method_flag.unwrap_or(config.sampler.method);
    if !method.is_streaming() {
        return Err(CliError::Config(format!(
            "update requires a streaming method (pprb or smcmc-*), got {}",
            method.name()
        )));
    }
    let seed = config.seed(seed_flag);
    let schema = config.schema()?;
    let (hyper, z_hyper) = config.priors.build(&schema)?;
    config.sampler.validate()?;
    let model_digest = config.model_digest(&schema)?;

    let (prior_manifest, prior_digest) = StageManifest::read(prior_dir)?;
    if prior_manifest.model_digest != model_digest {
        return Err(CliError::Lineage(
            "model sections (schema or priors) differ from the prior stage".into(),
        ));
    }
    prior_manifest.verify_outputs()?;
    prior_manifest.verify_inputs()?;

    let (prior_kind, prior_pool) =
        store::read_store_path(&prior_dir.join(STORE_NAME))?;
    if prior_pool.schema_digest != schema.digest() {
        return Err(CliError::Lineage("sample store schema differs".into()));
    }
    if prior_pool.stage != prior_manifest.stage {
        return Err(CliError::Lineage("manifest and store disagree on stage".into()));
    }

    // ingest all raw files: the prior stage's inputs plus the new one
    let mut paths = prior_manifest.input_paths();
    paths.push(new_file.to_path_buf());
    let files = ingest(&schema, &paths)?;
    let new_stage = prior_manifest.stage + 1;
    if files.len() != new_stage {
        return Err(CliError::Data(format!(
            "expected {} input files, found {}",
            new_stage,
            files.len()
        )));
    }

    // previous comparison containers are reused, only the new file's pairs
    // are compared here
    let mut matrices = Vec::with_capacity(new_stage - 1);
    for entry in &prior_manifest.comparison_files {
        let handle = std::fs::File::open(&entry.path)
            .map_err(|e| CliError::Lineage(format!("{}: {e}", entry.path)))?;
        matrices.push(ComparisonMatrix::read_from(handle)?);
    }
    let refs: Vec<&RecordFile> = files[..new_stage - 1].iter().collect();
    matrices.push(ComparisonMatrix::build(&schema, &refs, &files[new_stage - 1])?);
    for m in &matrices {
        if m.schema_digest() != &schema.digest() {
            return Err(CliError::Lineage("comparison container schema differs".into()));
        }
    }
    let comps = ComparisonSet::from_matrices(
        linkstream::records::FileSizes(files.iter().map(|f| f.len()).collect()),
        matrices,
    )?;
    let n_new = files[new_stage - 1].len();
    let block = config.sampler.resolve_block(n_new);

    let input_files: Result<Vec<FileEntry>, CliError> =
        paths.iter().map(|p| FileEntry::new(p)).collect();
    let input_files = input_files?;

    let manifest = match method {
        Method::Pprb => {
            let (iterations, burn_in) = config.sampler.chain_iterations(Method::Pprb)?;
            let pool = pprb_within_gibbs_update(
                &schema,
                &prior_pool,
                &comps,
                &hyper,
                &z_hyper,
                PprbConfig {
                    iterations,
                    burn_in,
                    block_size: Some(block),
                },
                seed,
            )?;
            write_stage(
                out,
                &schema,
                input_files,
                comps.matrices(),
                StoreKind::Pool,
                Some(&pool),
                None,
                SamplerSnapshot {
                    method: method.name().into(),
                    iterations,
                    burn_in,
                    ensemble_size: None,
                    jump_iterations: None,
                    transition_iterations: None,
                    block_size: Some(block),
                },
                seed,
                model_digest,
                Some(prior_digest),
            )?
        }
        Method::SmcmcComp | Method::SmcmcLb | Method::SmcmcMixed => {
            let kernel = match method {
                Method::SmcmcComp => KernelKind::Component,
                Method::SmcmcLb => KernelKind::LocallyBalanced,
                _ => KernelKind::Mixed,
            };
            let (jump, transition) = config.sampler.smcmc_iterations(method)?;
            let workers = config.workers(workers_flag);
            let ensemble = match prior_kind {
                StoreKind::Ensemble => prior_pool.into_ensemble(),
                StoreKind::Pool => {
                    Ensemble::from_pool_thinned(&prior_pool, config.sampler.ensemble_size)?
                }
            };
            let (next, report) = smcmc_update(
                &schema,
                &ensemble,
                &comps,
                &hyper,
                &z_hyper,
                SmcmcConfig {
                    kernel,
                    jump_iterations: jump,
                    transition_iterations: transition,
                    block_size: Some(block),
                    workers,
                },
                seed,
            )?;
            let serial: f64 = report.member_seconds.iter().sum();
            println!(
                "ensemble of {} advanced in {serial:.2}s of member compute across {workers} workers",
                next.len()
            );
            write_stage(
                out,
                &schema,
                input_files,
                comps.matrices(),
                StoreKind::Ensemble,
                None,
                Some(&next),
                SamplerSnapshot {
                    method: method.name().into(),
                    iterations: transition,
                    burn_in: 0,
                    ensemble_size: Some(next.len()),
                    jump_iterations: Some(jump),
                    transition_iterations: Some(transition),
                    block_size: Some(block),
                },
                seed,
                model_digest,
                Some(prior_digest),
            )?
        }
        Method::Gibbs => unreachable!("rejected above"),
    };
    println!(
        "updated to stage {} with {} ({} draws) -> {}",
        manifest.stage,
        method.name(),
        manifest.draws,
        out.display()
    );
    Ok(manifest)
}

/// Non-streaming reference fit over all files at once; not a CLI verb, but
/// used by benchmarking and tests through the library.
pub fn full_gibbs_fit(
    config: &RunConfig,
    paths: &[PathBuf],
    seed_flag: Option<u64>,
) -> Result<SamplePool, CliError> {
    let schema = config.schema()?;
    let (hyper, z_hyper) = config.priors.build(&schema)?;
    let (iterations, burn_in) = config.sampler.chain_iterations(Method::Gibbs)?;
    let files = ingest(&schema, paths)?;
    let comps = ComparisonSet::build(&schema, &files)?;
    Ok(gibbs_componentwise(
        &schema,
        &comps,
        &hyper,
        &z_hyper,
        GibbsConfig { iterations, burn_in },
        config.seed(seed_flag),
    )?)
}

/// `evaluate`: score a stored stage against ground truth.
pub fn cmd_evaluate(
    store_dir: &Path,
    truth_path: &Path,
    out: &Path,
) -> Result<evaluation::MetricSummary, CliError> {
    let (_, pool) = store::read_store_path(&store_dir.join(STORE_NAME))?;
    let truth_file = std::fs::File::open(truth_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", truth_path.display())))?;
    let truth = GroundTruth::read_csv(truth_file)?;
    if truth.sizes() != pool.sizes {
        return Err(CliError::Data(format!(
            "truth covers files sized {:?}, store has {:?}",
            truth.sizes().0,
            pool.sizes.0
        )));
    }
    let series = evaluation::score_pool(&pool, &truth)?;
    ensure_dir(out)?;
    evaluation::write_metrics_csv(&series, std::fs::File::create(out.join("metrics.csv"))?)?;
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_vec_pretty(&series.summary)?,
    )?;
    println!(
        "scored {} draws: F1 {:.4} ({:.4}), entities {:.1} ({:.1})",
        series.summary.draws,
        series.summary.f1_mean,
        series.summary.f1_sd,
        series.summary.entities_mean,
        series.summary.entities_sd
    );
    Ok(series.summary)
}

/// Diagnostics report for one stored stage.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct DiagnoseReport {
    pub stage: usize,
    pub kind: String,
    pub draws: usize,
    /// Median effective sample size across every `m`, `u` component; for an
    /// ensemble this equals the member count because members are independent.
    pub median_ess_mu: f64,
    /// Distinct values of each matching vector across the stored draws.
    pub distinct_z: Vec<usize>,
    /// Set when some matching vector has collapsed to a single value.
    pub degenerate: bool,
    pub validity_violations: usize,
}

/// `diagnose`: effective-sample-size and degeneracy report.
pub fn cmd_diagnose(store_dir: &Path, out: &Path) -> Result<DiagnoseReport, CliError> {
    let (kind, pool) = store::read_store_path(&store_dir.join(STORE_NAME))?;
    let median_ess_mu = match kind {
        StoreKind::Pool => evaluation::median_ess_mu(&pool)?,
        StoreKind::Ensemble => pool.len() as f64,
    };
    let distinct_z: Vec<usize> = (0..pool.sizes.file_count() - 1)
        .map(|v| evaluation::distinct_z_count(&pool, v))
        .collect();
    let degenerate = pool.len() > 1 && distinct_z.iter().any(|&d| d == 1);
    let report = DiagnoseReport {
        stage: pool.stage,
        kind: match kind {
            StoreKind::Pool => "pool".into(),
            StoreKind::Ensemble => "ensemble".into(),
        },
        draws: pool.len(),
        median_ess_mu,
        distinct_z,
        degenerate,
        validity_violations: pool.validity_violations,
    };
    ensure_dir(out)?;
    std::fs::write(
        out.join("diagnostics.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    println!(
        "stage {} {}: median ESS {:.1}, distinct z {:?}{}",
        report.stage,
        report.kind,
        report.median_ess_mu,
        report.distinct_z,
        if report.degenerate { " [degenerate]" } else { "" }
    );
    Ok(report)
}
