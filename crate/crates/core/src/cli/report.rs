//! Canonical JSON reports and the append-only output directory.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::write_new;
use crate::{Error, Result};

pub const TOOL: &str = "kernbound";

/// Builds the canonical report text: sorted keys, pretty printed, trailing
/// newline. Fails if any number was not finite.
pub fn canonical<T: Serialize>(command: &str, config: Value, seed: u64, result: &T) -> Result<String> {
    let report = json!({
        "tool": TOOL,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "seed": seed,
        "result": serde_json::to_value(result)?,
    });
    // serde_json maps NaN and infinities to null; nothing else emits null
    if let Some(path) = find_null(&report, "") {
        return Err(Error::Data(format!("non-finite number at `{path}` in the report")));
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    Ok(text)
}

fn find_null(v: &Value, path: &str) -> Option<String> {
    match v {
        Value::Null => Some(path.to_string()),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .find_map(|(i, x)| find_null(x, &format!("{path}[{i}]"))),
        Value::Object(o) => o.iter().find_map(|(k, x)| find_null(x, &format!("{path}.{k}"))),
        _ => None,
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn short_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

/// Writes `<out>/<command>-<hash>.json` plus any sibling artifacts sharing
/// the hash, then appends a line to `<out>/runs.jsonl`. Returns the report
/// path. An identical rerun finds its files already present.
pub fn emit(out: &Path, command: &str, text: &str, extra: &[(&str, &[u8])]) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let stem = format!("{command}-{}", short_hash(text.as_bytes()));
    let path = out.join(format!("{stem}.json"));
    write_new(&path, text.as_bytes())?;
    for (ext, bytes) in extra {
        write_new(&out.join(format!("{stem}.{ext}")), bytes)?;
    }
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let line = json!({
        "command": command,
        "report": format!("{stem}.json"),
        "timestamp": timestamp,
    });
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("runs.jsonl"))?;
    writeln!(log, "{line}")?;
    Ok(path)
}
