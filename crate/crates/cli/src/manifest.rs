//! Stage manifests and lineage checks.
//!
//! Each fit or update writes one stage directory holding the sample store,
//! every comparison container so far, and a manifest recording digests of all
//! inputs and outputs plus the digest of the previous stage's manifest. An
//! update refuses a prior stage whose recorded digests no longer match what
//! is on disk, or whose model sections differ from the current config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use linkstream::store::{file_digest, sha256_hex};

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const STORE_NAME: &str = "samples.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn new(path: &Path) -> Result<Self, CliError> {
        Ok(FileEntry {
            path: path.to_string_lossy().into_owned(),
            sha256: file_digest(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        })
    }

    pub fn verify(&self, label: &str) -> Result<(), CliError> {
        let actual = file_digest(Path::new(&self.path))
            .map_err(|e| CliError::Lineage(format!("{label} {} unreadable: {e}", self.path)))?;
        if actual != self.sha256 {
            return Err(CliError::Lineage(format!(
                "{label} {} digest mismatch: recorded {}, found {actual}",
                self.path, self.sha256
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerSnapshot {
    pub method: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub ensemble_size: Option<usize>,
    pub jump_iterations: Option<usize>,
    pub transition_iterations: Option<usize>,
    pub block_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageManifest {
    pub format_version: u32,
    /// Files assimilated so far.
    pub stage: usize,
    /// Raw record CSVs in arrival order.
    pub input_files: Vec<FileEntry>,
    /// Comparison containers `gamma_2.bin ... gamma_k.bin` in this directory.
    pub comparison_files: Vec<FileEntry>,
    pub store_file: FileEntry,
    pub store_kind: String,
    /// Digest over schema and prior sections; stages must agree.
    pub model_digest: String,
    pub sampler: SamplerSnapshot,
    pub seed: u64,
    pub draws: usize,
    /// Digest of the previous stage's manifest bytes.
    pub lineage: Option<String>,
}

impl StageManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let bytes = serde_json::to_vec_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_NAME), bytes)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<(Self, String), CliError> {
        let path = dir.join(MANIFEST_NAME);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let manifest: StageManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("bad manifest {}: {e}", path.display())))?;
        Ok((manifest, sha256_hex(&bytes)))
    }

    /// Integrity check of a prior stage directory: the store and every
    /// comparison container must match their recorded digests.
    pub fn verify_outputs(&self) -> Result<(), CliError> {
        self.store_file.verify("sample store")?;
        for entry in &self.comparison_files {
            entry.verify("comparison container")?;
        }
        Ok(())
    }

    /// Raw input files must still match what this stage ingested.
    pub fn verify_inputs(&self) -> Result<(), CliError> {
        for entry in &self.input_files {
            // input drift is a data problem, not a lineage one
            let actual = file_digest(Path::new(&entry.path))
                .map_err(|e| CliError::Data(format!("input {} unreadable: {e}", entry.path)))?;
            if actual != entry.sha256 {
                return Err(CliError::Data(format!(
                    "input {} changed since it was ingested",
                    entry.path
                )));
            }
        }
        Ok(())
    }

    pub fn input_paths(&self) -> Vec<PathBuf> {
        self.input_files.iter().map(|e| PathBuf::from(&e.path)).collect()
    }
}

pub fn gamma_name(file_number: usize) -> String {
    format!("gamma_{file_number}.bin")
}
