//! Versioned binary parameter blobs: magic, version, JSON header, then the
//! parameter vector as little-endian `f32`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DSIMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(header: &serde_json::Value, params: &[f64]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(28 + header.len() + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<(serde_json::Value, Vec<f64>)> {
    let bad = |d: &str| Error::format(origin, d);
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated magic"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)
        .map_err(|_| bad("truncated version"))?;
    let version = u32::from_le_bytes(u32b);
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)
        .map_err(|_| bad("truncated header length"))?;
    let hlen = u64::from_le_bytes(u64b) as usize;
    if r.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: serde_json::Value = serde_json::from_slice(&r[..hlen])?;
    r = &r[hlen..];
    r.read_exact(&mut u64b)
        .map_err(|_| bad("truncated parameter count"))?;
    let n = u64::from_le_bytes(u64b) as usize;
    if r.len() != 4 * n {
        return Err(bad("parameter payload size mismatch"));
    }
    let params = r
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, params))
}

/// Write `bytes` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(path: &Path, header: &serde_json::Value, params: &[f64]) -> Result<()> {
    write_atomic(path, &encode_checkpoint(header, params)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(serde_json::Value, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
