//! Self-admitted technical debt detection: corpus cleaning, TF-IDF features,
//! class-imbalance handling, three classifier families, evaluation and
//! linear attributions.

pub mod balance;
pub mod corpus;
pub mod eval;
pub mod explain;
pub mod features;
pub mod models;
pub mod text;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}
