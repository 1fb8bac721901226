use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Written as `manifest.json` next to every artifact set that is not a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub kind: String,
    pub version: String,
    /// Arguments of the producing command, program name excluded.
    pub command: Vec<String>,
    /// SHA-256 of the JSON encoding of `parameters`.
    pub config_hash: String,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}

impl ArtifactManifest {
    pub fn new(kind: &str, command: Vec<String>, parameters: serde_json::Value, seeds: Vec<u64>) -> Self {
        let payload = serde_json::to_vec(&parameters).unwrap_or_default();
        ArtifactManifest {
            kind: kind.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config_hash: sha256_hex(&payload),
            parameters,
            seeds,
            files: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| crate::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(serde_json::from_str(&text)?)
}
