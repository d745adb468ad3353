//! Binary cache for kernel and renewal tables.
//!
//! Layout: magic `CWTB`, little-endian `u64` header length, JSON header,
//! `u64` row count, then each row as `u64` length plus `f64` values, and a
//! trailing SHA-256 of everything before it.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::family::IncrementFamily;
use super::kernel::ConditionKernel;
use super::renewal::RenewalTable;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CWTB";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KernelKey {
    family: IncrementFamily,
    horizon: usize,
    start: usize,
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn encode(header: &str, rows: &[Vec<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for row in rows {
        out.extend_from_slice(&(row.len() as u64).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn corrupt(msg: &str) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()))
}

fn decode(bytes: &[u8]) -> Result<(String, Vec<Vec<f64>>)> {
    if bytes.len() < 4 + 8 + 8 + 32 || &bytes[..4] != MAGIC {
        return Err(corrupt("not a table cache file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("cache content hash mismatch"));
    }
    let mut cur = &body[4..];
    let take_u64 = |cur: &mut &[u8]| -> Result<u64> {
        let mut b = [0u8; 8];
        cur.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let hlen = take_u64(&mut cur)? as usize;
    if cur.len() < hlen {
        return Err(corrupt("truncated header"));
    }
    let header = String::from_utf8(cur[..hlen].to_vec()).map_err(|_| corrupt("header is not utf-8"))?;
    cur = &cur[hlen..];
    let nrows = take_u64(&mut cur)? as usize;
    let mut rows = Vec::with_capacity(nrows);
    for _ in 0..nrows {
        let len = take_u64(&mut cur)? as usize;
        if cur.len() < len * 8 {
            return Err(corrupt("truncated row"));
        }
        let row = cur[..len * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        cur = &cur[len * 8..];
        rows.push(row);
    }
    Ok((header, rows))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn kernel_cache_path(dir: &Path, family: &IncrementFamily, horizon: usize, start: usize) -> PathBuf {
    let key = serde_json::to_string(&KernelKey { family: *family, horizon, start }).expect("key serialises");
    dir.join(format!("kernel-{}.bin", &sha256_hex(key.as_bytes())[..16]))
}

/// Store a kernel; returns the file path and its content hash.
pub fn save_kernel(dir: &Path, kernel: &ConditionKernel) -> Result<(PathBuf, String)> {
    fs::create_dir_all(dir)?;
    let key = KernelKey { family: kernel.family, horizon: kernel.horizon, start: kernel.start };
    let bytes = encode(&serde_json::to_string(&key)?, &kernel.tables);
    let path = kernel_cache_path(dir, &kernel.family, kernel.horizon, kernel.start);
    write_atomic(&path, &bytes)?;
    Ok((path, sha256_hex(&bytes)))
}

/// Load a cached kernel if present; a file with a bad hash is an error.
pub fn load_kernel(dir: &Path, family: &IncrementFamily, horizon: usize, start: usize) -> Result<Option<(ConditionKernel, String)>> {
    let path = kernel_cache_path(dir, family, horizon, start);
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&path)?;
    let (header, tables) = decode(&bytes)?;
    let key: KernelKey = serde_json::from_str(&header)?;
    if key.family != *family || key.horizon != horizon || key.start != start {
        return Err(corrupt("cache key collision"));
    }
    let pmf = family.step_pmf().ok_or_else(|| corrupt("cached kernel for non-lattice family"))?;
    Ok(Some((ConditionKernel { family: *family, pmf, horizon, start, tables }, sha256_hex(&bytes))))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RenewalHeader {
    table: RenewalTable,
}

/// Store a renewal table; the numeric columns travel as rows.
pub fn save_renewal(path: &Path, table: &RenewalTable) -> Result<String> {
    let mut header = table.clone();
    let atoms = header.atoms.take().unwrap_or_default();
    let rows = vec![header.grid.clone(), header.values.clone(), header.std_errors.clone(), atoms];
    header.grid.clear();
    header.values.clear();
    header.std_errors.clear();
    let bytes = encode(&serde_json::to_string(&RenewalHeader { table: header })?, &rows);
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load_renewal(path: &Path) -> Result<RenewalTable> {
    let bytes = fs::read(path)?;
    let (header, mut rows) = decode(&bytes)?;
    let mut t = serde_json::from_str::<RenewalHeader>(&header)?.table;
    if rows.len() != 4 {
        return Err(corrupt("renewal cache needs four rows"));
    }
    let atoms = rows.pop().unwrap();
    t.std_errors = rows.pop().unwrap();
    t.values = rows.pop().unwrap();
    t.grid = rows.pop().unwrap();
    t.atoms = (!atoms.is_empty()).then_some(atoms);
    Ok(t)
}
