//! Config hashing and the provenance stamp written into every artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Provenance {
        Provenance {
            tool: "corrner".to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
        }
    }
}

/// SHA-256 of the canonical JSON form of `value` (object keys sorted, no whitespace).
pub fn config_hash<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, so this is canonical.
    let canonical = serde_json::to_value(value).expect("config serializes to JSON");
    let bytes = serde_json::to_vec(&canonical).expect("JSON value serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// SHA-256 of raw bytes, for fingerprinting input files.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
