use serde::Serialize;
use serde_json::{json, Value};

/// Command, version, seed and configuration of a run, embedded in every output.
pub fn record<C: Serialize>(command: &str, seed: u64, config: &C) -> Value {
    json!({
        "tool": "ocdtw",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": serde_json::to_value(config).expect("config serializes"),
    })
}

/// The record as a `#` comment line for CSV and YAML outputs.
pub fn comment(record: &Value) -> String {
    format!("# provenance: {record}\n")
}
