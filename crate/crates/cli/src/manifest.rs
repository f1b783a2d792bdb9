//! `manifest.json`: what produced an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub subcommand: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<InputHash>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(subcommand: &str, seed: Option<u64>) -> Self {
        RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config: BTreeMap::new(),
            inputs: Vec::new(),
            seed,
            started_at: now(),
            finished_at: String::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.config
            .insert(key.to_string(), serde_json::to_value(value).expect("config values serialize"));
    }

    /// Records the hash of a file, or of every file under a directory.
    pub fn add_input(&mut self, path: &Path) -> anyhow::Result<()> {
        if path.is_dir() {
            for f in crate::corpus::corpus_files(path)? {
                self.add_input(&f)?;
            }
            return Ok(());
        }
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn write(mut self, dir: &Path) -> anyhow::Result<()> {
        self.finished_at = now();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Inputs whose current hash differs from the recorded one.
    pub fn stale_inputs(&self) -> Vec<PathBuf> {
        self.inputs
            .iter()
            .filter(|i| sha256_file(&i.path).ok().as_deref() != Some(i.sha256.as_str()))
            .map(|i| i.path.clone())
            .collect()
    }
}
