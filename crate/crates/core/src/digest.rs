use serde::Serialize;
use sha2::{Digest, Sha256};

/// Stable short digest of a serializable value.
///
/// The value is rendered as compact JSON (struct fields in declaration order,
/// floats in shortest round-trip form) and hashed with SHA-256. The first 16
/// hex characters are returned.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize to JSON");
    let hash = Sha256::digest(&bytes);
    hex::encode(&hash[..8])
}
