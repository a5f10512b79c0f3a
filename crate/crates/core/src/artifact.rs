//! Content hashing and JSON persistence for pipeline artifacts.
//!
//! Downstream artifacts record the hashes of what they were built from, and
//! loaders refuse inputs whose hash does not match.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline; byte-stable for equal values.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn hash_of<T: Serialize>(value: &T) -> Result<String> {
    Ok(content_hash(&to_json_bytes(value)?))
}

/// Write `value` and return the hash of the written bytes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let bytes = to_json_bytes(value)?;
    std::fs::write(path, &bytes)?;
    Ok(content_hash(&bytes))
}

/// Read `path`, returning the value and the hash of its bytes.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let bytes = std::fs::read(path)?;
    let value = serde_json::from_slice(&bytes)?;
    Ok((value, content_hash(&bytes)))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(content_hash(&std::fs::read(path)?))
}

pub fn verify_hash(artifact: &str, expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(Error::HashMismatch {
            artifact: artifact.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

/// An artifact body plus the content hashes of the inputs it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub inputs: BTreeMap<String, String>,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Stamped<T> {
    pub fn new(body: T, inputs: &[(&str, &str)]) -> Self {
        Self {
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            body,
        }
    }

    /// Check that input `name` was recorded with hash `found`.
    pub fn require(&self, name: &str, found: &str) -> Result<()> {
        let expected = self.inputs.get(name).ok_or_else(|| Error::HashMismatch {
            artifact: name.to_string(),
            expected: "<unrecorded>".into(),
            found: found.to_string(),
        })?;
        verify_hash(name, expected, found)
    }
}
