//! JSON-lines window cache.
//!
//! Line 1 is a [`CacheHeader`]; each following line is one
//! [`ObservationWindow`]. A cache is stale when its `key_hash` differs from
//! the hash of the current preprocessing parameters.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ObservationWindow;
use crate::error::{Error, Result};

pub const CACHE_FORMAT: &str = "trajcast.windows";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub format: String,
    pub version: u32,
    /// Preprocessing parameters and input-data digest the windows were built from.
    pub key: serde_json::Value,
    pub key_hash: String,
    pub count: usize,
}

pub(crate) fn hash_json(v: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

pub fn write_cache(path: &Path, key: &serde_json::Value, windows: &[ObservationWindow]) -> Result<()> {
    let header = CacheHeader {
        format: CACHE_FORMAT.into(),
        version: CACHE_VERSION,
        key: key.clone(),
        key_hash: hash_json(key),
        count: windows.len(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for w in windows {
        serde_json::to_writer(&mut out, w)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load a cache, or `Ok(None)` if it was built with different parameters.
pub fn read_cache(path: &Path, key: &serde_json::Value) -> Result<Option<Vec<ObservationWindow>>> {
    let fmt_err = |message: String| Error::Format { path: path.to_path_buf(), message };
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| fmt_err("missing header line".into()))??;
    let header: CacheHeader = serde_json::from_str(&first).map_err(|e| fmt_err(format!("bad header: {e}")))?;
    if header.format != CACHE_FORMAT {
        return Err(fmt_err(format!("unexpected format `{}`", header.format)));
    }
    if header.version != CACHE_VERSION || header.key_hash != hash_json(key) {
        return Ok(None);
    }
    let mut windows = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        windows.push(serde_json::from_str(&line)?);
    }
    if windows.len() != header.count {
        return Err(fmt_err(format!("header announces {} windows, found {}", header.count, windows.len())));
    }
    Ok(Some(windows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn stale_key_invalidates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.jsonl");
        let w = ObservationWindow {
            scene: "eth".into(),
            agent_id: 3,
            anchor_frame: 70,
            origin: [1.0, 2.0],
            history: vec![[0.1, 0.2]; 8],
            future: vec![[0.3, 0.4]; 12],
            neighbors: vec![],
            velocity: [0.0, 0.1],
        };
        let key = json!({"max_dist": 10.0});
        write_cache(&path, &key, std::slice::from_ref(&w)).unwrap();
        assert_eq!(read_cache(&path, &key).unwrap().unwrap(), vec![w]);
        assert!(read_cache(&path, &json!({"max_dist": 5.0})).unwrap().is_none());
    }
}
