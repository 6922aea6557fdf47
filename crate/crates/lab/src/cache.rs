//! Binary cache for [`SumTable`]s.
//!
//! Layout, all little-endian: the magic `ALTAB\0\0\x01`, the first eight bytes
//! of SHA-256 of the family name as `u64`, `θ` as `f64`, `N` and `n` as `u64`,
//! the name length as `u32` followed by its UTF-8 bytes, then the `N·(n+1)`
//! row-major `f64` log-probabilities.

use std::fs;
use std::path::Path;

use alloc_lab_core::sum_distribution::SumTable;
use sha2::{Digest, Sha256};

use crate::error::LabError;

const MAGIC: &[u8; 8] = b"ALTAB\0\0\x01";

pub fn name_hash(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn encode(table: &SumTable) -> Vec<u8> {
    let name = table.family_name().as_bytes();
    let mut out = Vec::with_capacity(48 + name.len() + 8 * table.raw().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&name_hash(table.family_name()).to_le_bytes());
    out.extend_from_slice(&table.theta().to_le_bytes());
    out.extend_from_slice(&(table.boxes() as u64).to_le_bytes());
    out.extend_from_slice(&(table.n() as u64).to_le_bytes());
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    for x in table.raw() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8], LabError> {
        if self.bytes.len() < k {
            return Err(LabError::Invalid("table cache is truncated".into()));
        }
        let (head, tail) = self.bytes.split_at(k);
        self.bytes = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, LabError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, LabError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<SumTable, LabError> {
    let mut r = Reader { bytes };
    if r.take(8)? != MAGIC {
        return Err(LabError::Invalid("not a table cache file".into()));
    }
    let hash = r.u64()?;
    let theta = r.f64()?;
    let boxes = usize::try_from(r.u64()?).map_err(|_| LabError::Invalid("N does not fit".into()))?;
    let n = usize::try_from(r.u64()?).map_err(|_| LabError::Invalid("n does not fit".into()))?;
    let len = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
    let name = std::str::from_utf8(r.take(len)?)
        .map_err(|_| LabError::Invalid("family name is not UTF-8".into()))?
        .to_string();
    if name_hash(&name) != hash {
        return Err(LabError::Invalid("family name hash mismatch".into()));
    }
    let cells = boxes
        .checked_mul(n + 1)
        .ok_or_else(|| LabError::Invalid("cell count overflows".into()))?;
    if r.bytes.len() != 8 * cells {
        return Err(LabError::Invalid(format!(
            "expected {cells} cells, found {} bytes",
            r.bytes.len()
        )));
    }
    let log_p = r
        .bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(SumTable::from_raw(name, theta, boxes, n, log_p)?)
}

pub fn write_table(path: &Path, table: &SumTable) -> Result<(), LabError> {
    fs::write(path, encode(table)).map_err(|e| LabError::io(path, e))
}

pub fn read_table(path: &Path) -> Result<SumTable, LabError> {
    decode(&fs::read(path).map_err(|e| LabError::io(path, e))?)
}

/// Loads the table at `path` if its key matches, otherwise builds it with
/// `build` and writes it there.
pub fn load_or_build(
    path: &Path,
    family: &str,
    theta: f64,
    boxes: usize,
    n: usize,
    build: impl FnOnce() -> Result<SumTable, LabError>,
) -> Result<SumTable, LabError> {
    if path.exists() {
        let table = read_table(path)?;
        let same = table.family_name() == family
            && table.theta().to_bits() == theta.to_bits()
            && table.boxes() == boxes
            && table.n() == n;
        if same {
            return Ok(table);
        }
    }
    let table = build()?;
    write_table(path, &table)?;
    Ok(table)
}
