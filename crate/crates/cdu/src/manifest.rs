//! Run manifests: what produced each artifact, keyed by content hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// SHA-256 of the canonical JSON form of `value`: object keys sorted, no
/// whitespace.
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    sha256_hex(canonical_json(&v).as_bytes())
}

pub fn canonical_json(v: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key.
    v.to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestKind {
    Dataset,
    Train,
    Eval,
    Sweep,
    Plot,
}

/// One output file and its hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            sha256: file_hash(path)?,
            path: path.to_path_buf(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: ManifestKind,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seeds: Vec<(String, u64)>,
    /// Hashes of the datasets consumed or produced, by split.
    pub datasets: Vec<(String, String)>,
    /// Paths of the manifests this run consumed.
    pub parents: Vec<PathBuf>,
    pub code_version: String,
    /// Free-form facts about the run, such as which oracle produced labels.
    #[serde(default)]
    pub notes: Vec<(String, String)>,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn new<T: Serialize>(kind: ManifestKind, config: &T) -> Self {
        Self {
            kind,
            config: serde_json::to_value(config).expect("serializable config"),
            config_hash: canonical_hash(config),
            seeds: Vec::new(),
            datasets: Vec::new(),
            parents: Vec::new(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            notes: Vec::new(),
            started: now(),
            finished: String::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn add_artifact(&mut self, path: &Path) -> Result<()> {
        self.artifacts.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn write(mut self, path: &Path) -> Result<Self> {
        self.finished = now();
        let text = serde_json::to_string_pretty(&self).expect("serializable manifest");
        std::fs::write(path, text).map_err(CliError::io(path))?;
        Ok(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_hash_ignores_key_order() {
        let a: serde_json::Value =
            serde_json::from_str(r#"{"b": 1, "a": {"y": 2, "x": [1, 2]}}"#).unwrap();
        let b: serde_json::Value =
            serde_json::from_str(r#"{"a": {"x": [1, 2], "y": 2}, "b": 1}"#).unwrap();
        assert_eq!(canonical_hash(&a), canonical_hash(&b));
        assert_eq!(canonical_json(&a), r#"{"a":{"x":[1,2],"y":2},"b":1}"#);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
