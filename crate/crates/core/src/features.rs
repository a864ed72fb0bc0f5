//! Binary feature files.
//!
//! Layout (little-endian): magic `CCIMFEA1`, `dim: u64`, `rows: u64`, then
//! `rows × dim` f32 values row-major, then one `row_id` per line, each
//! terminated by `\n`.

use std::fs;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::types::FeatureSet;

pub const FEATURE_MAGIC: &[u8; 8] = b"CCIMFEA1";

pub fn encode_feature_set(fs: &FeatureSet) -> Vec<u8> {
    let mut w = Writer::new();
    w.magic(FEATURE_MAGIC);
    w.u64(fs.dim() as u64);
    w.u64(fs.len() as u64);
    for row in fs.rows() {
        for &v in row {
            w.f32(v);
        }
    }
    for id in fs.row_ids() {
        w.bytes(id.as_bytes());
        w.u8(b'\n');
    }
    w.finish()
}

pub fn decode_feature_set(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = Reader::new(bytes, "feature file");
    r.expect_magic(FEATURE_MAGIC)?;
    let dim = r.usize()?;
    let n = r.usize()?;
    if dim == 0 {
        return Err(r.corrupt("dim is zero"));
    }
    let mut rows = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let raw = r
            .take(dim * 4)
            .map_err(|_| r.corrupt(format!("header declares {n} rows but body ends in row {i}")))?;
        rows.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    let tail = std::str::from_utf8(r.rest()).map_err(|_| Error::Corruption("row ids are not UTF-8".into()))?;
    let mut ids: Vec<String> = tail.split('\n').map(str::to_string).collect();
    // the final terminator leaves one empty piece behind
    if ids.last().is_some_and(|s| s.is_empty()) {
        ids.pop();
    } else if !ids.is_empty() && n > 0 {
        return Err(Error::Corruption("row id section is not newline-terminated".into()));
    }
    if ids.len() != n {
        return Err(Error::Corruption(format!(
            "header declares {n} rows but {} row ids follow",
            ids.len()
        )));
    }
    FeatureSet::new(dim, rows, ids).map_err(|e| Error::Corruption(e.to_string()))
}

pub fn write_feature_set(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature_set(fs))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_feature_set(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_feature_set(&bytes)
}
