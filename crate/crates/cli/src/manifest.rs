//! Run manifest and hashed artifact output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedHash {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHash {
    pub file: String,
    pub mode: String,
    pub sha256: String,
}

/// Provenance record written last into every artifact directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub skill: Option<NamedHash>,
    pub datasets: Vec<DatasetHash>,
    pub rng_seed: Option<u64>,
    /// Unix seconds; zero under `--reproducible`.
    pub started_at: u64,
    pub finished_at: u64,
    /// Relative path to SHA-256 of every artifact in the directory.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, reproducible: bool) -> RunManifest {
        let config_hash = sha256_hex(serde_json::to_string(&config).expect("json value serializes").as_bytes());
        RunManifest {
            tool: "hyperlaw".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            config_hash,
            skill: None,
            datasets: Vec::new(),
            rng_seed: None,
            started_at: if reproducible { 0 } else { unix_now() },
            finished_at: 0,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Artifacts whose current hash differs from the recorded one, or that are missing.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|(rel, hash)| fs::read(dir.join(rel)).map_or(true, |b| sha256_hex(&b) != **hash))
            .map(|(rel, _)| rel.clone())
            .collect()
    }
}

/// Writes artifacts under one directory and records their hashes.
pub struct ArtifactDir {
    root: PathBuf,
    reproducible: bool,
    pub manifest: RunManifest,
}

impl ArtifactDir {
    pub fn create(root: &Path, manifest: RunManifest, reproducible: bool) -> Result<ArtifactDir> {
        fs::create_dir_all(root.join("plots")).with_context(|| format!("creating {}", root.display()))?;
        Ok(ArtifactDir {
            root: root.to_path_buf(),
            reproducible,
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Timestamp for embedding in plots; `None` under `--reproducible`.
    pub fn timestamp(&self) -> Option<u64> {
        (!self.reproducible).then(unix_now)
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.root.join(rel);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.artifacts.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.finished_at = if self.reproducible { 0 } else { unix_now() };
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.root)
    }
}
