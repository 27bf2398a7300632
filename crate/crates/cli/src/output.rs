//! Output directory layout and provenance stamping.
//!
//! Each command writes into `<out>/<command>-<hash8>/` where `hash8` is the
//! SHA-256 prefix of the effective config. Identical config + seed therefore
//! reproduce byte-identical files in the same place; different configs never
//! share a directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let canonical =
            serde_json::to_vec(cfg).context("config cannot be serialized for hashing")?;
        let digest = Sha256::digest(&canonical);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Provenance {
            config_hash: hex[..16].to_string(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: cfg.timestamp.clone(),
        })
    }

    pub fn short_hash(&self) -> &str {
        &self.config_hash[..8]
    }

    /// The trailing provenance columns appended to every CSV row.
    pub fn csv_suffix(&self) -> String {
        format!("{},{},{}", self.config_hash, self.seed, self.version)
    }

    pub const CSV_HEADER_SUFFIX: &'static str = "config_hash,seed,version";
}

pub struct OutputDir {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl OutputDir {
    pub fn create(out_root: &Path, command: &str, prov: &Provenance) -> Result<Self> {
        let dir = out_root.join(format!("{command}-{}", prov.short_hash()));
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(OutputDir { dir, files: vec![] })
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).context("serialization failed")?;
        text.push('\n');
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(path)
    }
}
