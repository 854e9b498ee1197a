//! Checkpoints: a text manifest (one line per tensor), raw little-endian
//! f64 payloads in manifest order, then the FNV-1a hash of the payload bytes.
//!
//! ```text
//! coopgraph-checkpoint 1
//! seed 0
//! tensor mot.embed.l0.w f64 2 32
//! ...
//! end
//! <payload><u64 checksum>
//! ```

use std::fs;
use std::path::Path;

use coopgraph::numerics::{ParamStore, Tensor};
use coopgraph::rng::fnv1a;

use crate::error::{CliError, Result};

const MAGIC: &str = "coopgraph-checkpoint 1";

pub fn encode(params: &ParamStore) -> Vec<u8> {
    let mut header = format!("{MAGIC}\nseed {}\n", params.seed());
    for (name, t) in params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("tensor {name} f64 {}\n", dims.join(" ")));
    }
    header.push_str("end\n");
    let mut payload = Vec::with_capacity(params.num_values() * 8);
    for (_, t) in params.iter() {
        for x in t.data() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut out = header.into_bytes();
    let sum = fnv1a(&payload);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ParamStore> {
    let corrupt = |reason: String| CliError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let end = bytes
        .windows(5)
        .position(|w| w == b"\nend\n")
        .ok_or_else(|| corrupt("manifest is not terminated".into()))?
        + 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| corrupt("manifest is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(corrupt("bad magic line".into()));
    }
    let seed = lines
        .next()
        .and_then(|l| l.strip_prefix("seed "))
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| corrupt("missing seed line".into()))?;
    let mut entries = Vec::new();
    for line in lines {
        let mut parts = line.split(' ');
        let (Some("tensor"), Some(name), Some("f64")) = (parts.next(), parts.next(), parts.next()) else {
            return Err(corrupt(format!("bad manifest line `{line}`")));
        };
        let shape: Vec<usize> = parts
            .map(|d| d.parse().map_err(|_| corrupt(format!("bad shape in `{line}`"))))
            .collect::<Result<_>>()?;
        entries.push((name.to_string(), shape));
    }
    let body = &bytes[end + 4..];
    let n_values: usize = entries.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if body.len() != n_values * 8 + 8 {
        return Err(corrupt(format!(
            "expected {} payload bytes, found {}",
            n_values * 8 + 8,
            body.len()
        )));
    }
    let (payload, sum) = body.split_at(n_values * 8);
    if fnv1a(payload).to_le_bytes() != sum {
        return Err(corrupt("checksum mismatch".into()));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut store = ParamStore::new(seed);
    for (name, shape) in entries {
        let n = shape.iter().product();
        let t = Tensor::new(&shape, values.by_ref().take(n).collect()).map_err(|e| corrupt(e.to_string()))?;
        store.insert(name, t);
    }
    Ok(store)
}

pub fn save(path: &Path, params: &ParamStore) -> Result<()> {
    fs::write(path, encode(params)).map_err(CliError::io(path))
}

/// Loads a checkpoint and checks it against the tensors `expected` declares.
pub fn load(path: &Path, expected: &ParamStore) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let store = decode(&bytes, path)?;
    expected
        .check_compatible(&store)
        .map_err(|e| CliError::IncompatibleCheckpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    Ok(store)
}
