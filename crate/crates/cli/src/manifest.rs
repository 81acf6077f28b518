use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;

/// Written once per run. The only file that carries a timestamp.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub status: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: &serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            command: command.into(),
            status: "ok".into(),
            config_hash: config_hash(config),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n")
    }
}

/// SHA-256 of the compact JSON encoding with object keys sorted.
pub fn config_hash(config: &serde_json::Value) -> String {
    // `Value` objects are BTreeMaps, so serialization is already key-sorted.
    let canonical = serde_json::to_string(config).expect("value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Sidecar manifest path for a single output file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
