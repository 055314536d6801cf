//! File output with provenance.
//!
//! CSV files start with a `#` comment line carrying the seed and config hash, then a
//! header row; numbers use 17 significant digits. JSON files embed the same two fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            seed: cfg.seed,
            config_hash: cfg.hash()?,
        })
    }

    pub fn csv_comment(&self) -> String {
        format!("# seed={} config_hash={}\n", self.seed, self.config_hash)
    }
}

/// 17 significant digits, enough to re-read every `f64` exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON object `{seed, config_hash, <key>: value}`.
pub fn with_provenance<T: Serialize>(prov: &Provenance, key: &str, value: &T) -> Result<serde_json::Value> {
    let mut obj = serde_json::Map::new();
    obj.insert("seed".into(), prov.seed.into());
    obj.insert("config_hash".into(), prov.config_hash.clone().into());
    obj.insert(key.into(), serde_json::to_value(value)?);
    Ok(serde_json::Value::Object(obj))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}
