//! `--config` files: TOML `key = value` pairs, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use erratum_core::judge::JudgeConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub normalization: Option<String>,
    pub tokenization: Option<String>,
    pub detector: Option<String>,
    pub provider: Option<String>,
    pub vocab: Option<PathBuf>,
    pub radius: Option<usize>,
    pub beam_truncation: Option<usize>,
    pub token_aggregation: Option<String>,
    pub top_n: Option<usize>,
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub judge: Option<JudgeConfig>,
    pub judge_exemplars: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag value if given, else config value.
pub fn pick<T: Clone>(flag: &Option<T>, config: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| config.clone())
}
