//! Decoded-frame cache keyed by source path, size and modification time.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use sha2::{Digest, Sha256};

use super::avi;
use crate::error::{Error, Result};

pub const CACHE_ENV: &str = "ECHOMIL_CACHE";
const MAGIC: &[u8; 4] = b"EMCF";

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn cache_key(path: &Path) -> Result<String> {
    let meta = fs::metadata(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mtime = meta
        .modified()
        .ok()
        .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let canonical = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_string_lossy().as_bytes());
    hasher.update(meta.len().to_le_bytes());
    hasher.update(mtime.to_le_bytes());
    Ok(hasher
        .finalize()
        .iter()
        .take(16)
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn load_cached(dir: &Path, path: &Path) -> Result<Array4<u8>> {
    let key = cache_key(path)?;
    let file = dir.join(format!("{key}.frames"));
    if let Ok(bytes) = fs::read(&file) {
        if let Some(frames) = parse(&bytes) {
            return Ok(frames);
        }
        log::warn!("ignoring corrupt cache entry {}", file.display());
    }
    let frames = avi::read_avi(path)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (t, h, w, _) = frames.dim();
    let mut out = Vec::with_capacity(16 + frames.len());
    out.extend_from_slice(MAGIC);
    for v in [t, h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend(frames.iter().copied());
    // write-then-rename keeps concurrent readers from seeing partial files
    let tmp = dir.join(format!("{key}.{}.tmp", std::process::id()));
    fs::write(&tmp, &out).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &file).map_err(|e| Error::io(&file, e))?;
    Ok(frames)
}

fn parse(bytes: &[u8]) -> Option<Array4<u8>> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return None;
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (t, h, w) = (dim(0), dim(1), dim(2));
    let data = &bytes[16..];
    if data.len() != t * h * w * 3 || t == 0 {
        return None;
    }
    Array4::from_shape_vec((t, h, w, 3), data.to_vec()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_load_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let video = dir.path().join("v.avi");
        let frames = Array4::from_shape_fn((2, 3, 4, 3), |(f, y, x, c)| (f + y + x + c) as u8);
        avi::write_avi(&video, &frames, 10).unwrap();
        let cache = dir.path().join("cache");
        let first = load_cached(&cache, &video).unwrap();
        assert_eq!(first, frames);
        assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
        let second = load_cached(&cache, &video).unwrap();
        assert_eq!(second, frames);
    }
}
