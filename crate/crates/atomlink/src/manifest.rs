use std::fs;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{HarnessError, Mode, Outputs};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance of one run. Only this file carries wall-clock times; the
/// outputs it lists depend on the scenario and seed alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub scenario_sha256: String,
    pub started_at: String,
    pub finished_at: String,
    pub threads: usize,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub(crate) fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(
        mode: Mode,
        seed: Option<u64>,
        scenario: &[u8],
        threads: usize,
        outputs: &Outputs,
        started_at: String,
    ) -> Self {
        let files = outputs
            .iter()
            .map(|(path, data)| FileEntry { path: path.clone(), sha256: sha256_hex(data), bytes: data.len() as u64 })
            .collect();
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode,
            seed,
            scenario_sha256: sha256_hex(scenario),
            finished_at: started_at.clone(),
            started_at,
            threads,
            files,
        }
    }

    pub fn file(&self, path: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.path == path)
    }
}

/// Re-hashes every file listed in `dir/manifest.json`. Returns the paths
/// whose content no longer matches (missing files included).
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>, HarnessError> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read(&path).map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    let man: RunManifest =
        serde_json::from_slice(&text).map_err(|e| HarnessError::Schema(format!("{}: {e}", path.display())))?;
    Ok(man
        .files
        .iter()
        .filter(|f| match fs::read(dir.join(&f.path)) {
            Ok(data) => sha256_hex(&data) != f.sha256 || data.len() as u64 != f.bytes,
            Err(_) => true,
        })
        .map(|f| f.path.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        // FIPS 180-2 test vector
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
