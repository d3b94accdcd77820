//! Versioned JSON container for trained parameters. Matrices serialize with
//! their shape (`dim`) next to the row-major data.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint<T> {
    pub format_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub payload: T,
}

pub fn save_checkpoint<T: Serialize>(path: &Path, kind: &str, config_hash: &str, seed: u64, payload: &T) -> Result<()> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        kind: kind.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        payload,
    };
    let text = serde_json::to_string(&ckpt)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint of the given kind; with `expected_hash`, refuses one
/// written under a different configuration.
pub fn load_checkpoint<T: DeserializeOwned>(path: &Path, kind: &str, expected_hash: Option<&str>) -> Result<Checkpoint<T>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let ckpt: Checkpoint<T> = serde_json::from_str(&text)?;
    if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "{}: unsupported checkpoint format_version {}",
            path.display(),
            ckpt.format_version
        )));
    }
    if ckpt.kind != kind {
        return Err(Error::InvalidConfig(format!(
            "{}: expected a `{kind}` checkpoint, found `{}`",
            path.display(),
            ckpt.kind
        )));
    }
    if let Some(h) = expected_hash {
        if ckpt.config_hash != h {
            return Err(Error::HashMismatch {
                expected: h.to_string(),
                found: ckpt.config_hash,
            });
        }
    }
    Ok(ckpt)
}
