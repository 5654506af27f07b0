//! Machine-readable reports.

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const REPORT_SCHEMA: &str = "approxdiag.report/1";

/// Hex SHA-256 of raw bytes, used to tie models and reports to their config.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Compact JSON with object keys sorted, so equal values give equal bytes.
pub fn canonical<T: Serialize>(value: &T) -> String {
    // serde_json's Value map is ordered by key without `preserve_order`
    let v = serde_json::to_value(value).expect("serializable report");
    serde_json::to_string(&v).expect("serializable report")
}

/// Wraps a command result in the common report envelope.
pub fn envelope<T: Serialize>(command: &str, status: &str, config_digest: Option<&str>, body: &T) -> Value {
    let mut v = json!({
        "schema": REPORT_SCHEMA,
        "command": command,
        "status": status,
        "result": serde_json::to_value(body).expect("serializable report"),
    });
    if let Some(d) = config_digest {
        v["config_digest"] = Value::String(d.to_owned());
    }
    v
}
