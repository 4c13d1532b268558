//! On-disk sample stores.
//!
//! A store is one binary file holding every retained draw of a stage —
//! `(m, u)` vectors, matching vectors in their 1-based external form, and the
//! per-draw matched tallies streaming updates consume — plus enough header to
//! refuse mismatched schemas. Writing is deterministic: identical inputs give
//! byte-identical files, which is what stage manifests take digests of.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linkage::MatchingVectors;
use crate::records::FileSizes;
use crate::samplers::{Draw, Ensemble, Provenance, SamplePool};

const STORE_MAGIC: &[u8; 4] = b"LSPS";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("container format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Linkage(#[from] crate::linkage::LinkageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    Pool,
    Ensemble,
}

#[allow(clippy::too_many_arguments)]
fn write_parts<W: Write>(
    mut w: W,
    kind: StoreKind,
    stage: usize,
    sizes: &FileSizes,
    schema_digest: &[u8; 32],
    level_totals: &[u64],
    draws: &[Draw],
    matched_counts: &[Vec<u64>],
    provenance: &Provenance,
    violations: usize,
) -> Result<(), StoreError> {
    w.write_all(STORE_MAGIC)?;
    w.write_u32::<LittleEndian>(STORE_VERSION)?;
    w.write_u8(match kind {
        StoreKind::Pool => 0,
        StoreKind::Ensemble => 1,
    })?;
    w.write_u32::<LittleEndian>(stage as u32)?;
    w.write_u32::<LittleEndian>(sizes.file_count() as u32)?;
    for file in 0..sizes.file_count() {
        w.write_u32::<LittleEndian>(sizes.size(file) as u32)?;
    }
    w.write_all(schema_digest)?;
    let p = level_totals.len();
    w.write_u32::<LittleEndian>(p as u32)?;
    w.write_u32::<LittleEndian>(draws.len() as u32)?;
    let method = provenance.method.as_bytes();
    w.write_u8(method.len() as u8)?;
    w.write_all(method)?;
    w.write_u64::<LittleEndian>(provenance.iterations as u64)?;
    w.write_u64::<LittleEndian>(provenance.burn_in as u64)?;
    w.write_u64::<LittleEndian>(provenance.seed)?;
    w.write_u64::<LittleEndian>(violations as u64)?;
    for t in level_totals {
        w.write_u64::<LittleEndian>(*t)?;
    }
    for (draw, matched) in draws.iter().zip(matched_counts.iter()) {
        for x in draw.m.iter().chain(draw.u.iter()) {
            w.write_f64::<LittleEndian>(*x)?;
        }
        for external in draw.z.to_external() {
            for value in external {
                w.write_u32::<LittleEndian>(value as u32)?;
            }
        }
        for c in matched {
            w.write_u64::<LittleEndian>(*c)?;
        }
    }
    Ok(())
}

pub fn write_pool<W: Write>(w: W, pool: &SamplePool) -> Result<(), StoreError> {
    write_parts(
        w,
        StoreKind::Pool,
        pool.stage,
        &pool.sizes,
        &pool.schema_digest,
        &pool.level_totals,
        &pool.draws,
        &pool.matched_counts,
        &pool.provenance,
        pool.validity_violations,
    )
}

pub fn write_ensemble<W: Write>(w: W, ensemble: &Ensemble) -> Result<(), StoreError> {
    write_parts(
        w,
        StoreKind::Ensemble,
        ensemble.stage,
        &ensemble.sizes,
        &ensemble.schema_digest,
        &ensemble.level_totals,
        &ensemble.members,
        &ensemble.matched_counts,
        &ensemble.provenance,
        ensemble.validity_violations,
    )
}

/// Reads a store; the pool shape carries either kind's data.
pub fn read_store<R: Read>(mut r: R) -> Result<(StoreKind, SamplePool), StoreError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STORE_MAGIC {
        return Err(StoreError::Format("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != STORE_VERSION {
        return Err(StoreError::Format(format!("unknown version {version}")));
    }
    let kind = match r.read_u8()? {
        0 => StoreKind::Pool,
        1 => StoreKind::Ensemble,
        k => return Err(StoreError::Format(format!("unknown kind {k}"))),
    };
    let stage = r.read_u32::<LittleEndian>()? as usize;
    let file_count = r.read_u32::<LittleEndian>()? as usize;
    let mut sizes = Vec::with_capacity(file_count);
    for _ in 0..file_count {
        sizes.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let sizes = FileSizes(sizes);
    let mut schema_digest = [0u8; 32];
    r.read_exact(&mut schema_digest)?;
    let p = r.read_u32::<LittleEndian>()? as usize;
    let s = r.read_u32::<LittleEndian>()? as usize;
    let method_len = r.read_u8()? as usize;
    let mut method = vec![0u8; method_len];
    r.read_exact(&mut method)?;
    let method = String::from_utf8(method).map_err(|_| StoreError::Format("method".into()))?;
    let iterations = r.read_u64::<LittleEndian>()? as usize;
    let burn_in = r.read_u64::<LittleEndian>()? as usize;
    let seed = r.read_u64::<LittleEndian>()?;
    let violations = r.read_u64::<LittleEndian>()? as usize;
    let mut level_totals = Vec::with_capacity(p);
    for _ in 0..p {
        level_totals.push(r.read_u64::<LittleEndian>()?);
    }
    let mut draws = Vec::with_capacity(s);
    let mut matched_counts = Vec::with_capacity(s);
    for _ in 0..s {
        let mut m = Vec::with_capacity(p);
        let mut u = Vec::with_capacity(p);
        for _ in 0..p {
            m.push(r.read_f64::<LittleEndian>()?);
        }
        for _ in 0..p {
            u.push(r.read_f64::<LittleEndian>()?);
        }
        let mut external = Vec::with_capacity(file_count - 1);
        for file in 1..file_count {
            let mut vec = Vec::with_capacity(sizes.size(file));
            for _ in 0..sizes.size(file) {
                vec.push(r.read_u32::<LittleEndian>()? as usize);
            }
            external.push(vec);
        }
        let z = MatchingVectors::from_external(&sizes, external)?;
        let mut matched = Vec::with_capacity(p);
        for _ in 0..p {
            matched.push(r.read_u64::<LittleEndian>()?);
        }
        draws.push(Draw { m, u, z });
        matched_counts.push(matched);
    }
    Ok((
        kind,
        SamplePool {
            schema_digest,
            sizes,
            stage,
            draws,
            matched_counts,
            level_totals,
            provenance: Provenance {
                method,
                iterations,
                burn_in,
                seed,
            },
            validity_violations: violations,
        },
    ))
}

pub fn write_pool_path(path: &Path, pool: &SamplePool) -> Result<(), StoreError> {
    let file = std::fs::File::create(path)?;
    write_pool(std::io::BufWriter::new(file), pool)
}

pub fn write_ensemble_path(path: &Path, ensemble: &Ensemble) -> Result<(), StoreError> {
    let file = std::fs::File::create(path)?;
    write_ensemble(std::io::BufWriter::new(file), ensemble)
}

pub fn read_store_path(path: &Path) -> Result<(StoreKind, SamplePool), StoreError> {
    let file = std::fs::File::open(path)?;
    read_store(std::io::BufReader::new(file))
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    std::io::copy(&mut file, &mut h)?;
    Ok(hex::encode(h.finalize()))
}
