use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use crate::error::Result;

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    /// Path → SHA-256, paths relative to the work directory where possible.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Self {
        std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Hashes of `files`, keyed by their display form relative to `base`.
pub(crate) fn hash_files(base: &Path, files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    files.iter().map(|f| Ok((key(base, f), file_hash(f)?))).collect()
}

pub(crate) fn key(base: &Path, f: &Path) -> String {
    f.strip_prefix(base).unwrap_or(f).display().to_string()
}

/// True when every recorded file still exists with the recorded hash and the
/// current input set is the recorded one.
pub(crate) fn is_fresh(record: &StageRecord, config_hash: &str, base: &Path, inputs: &BTreeMap<String, String>) -> bool {
    if record.config_hash != config_hash || &record.inputs != inputs {
        return false;
    }
    record.outputs.iter().all(|(k, h)| {
        let p = Path::new(k);
        let p = if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        file_hash(&p).is_ok_and(|cur| &cur == h)
    })
}
