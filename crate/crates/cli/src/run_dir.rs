//! Layout of a run directory and its checksum manifest.
//!
//! ```text
//! config.toml
//! datasets/k{k}.lobd
//! models/MLP_k{k}_s{seed}.json
//! predictions/{model}_k{k}_s{seed}.csv
//! reports/{build,metrics,ensembles,table}.json, table.csv, agreement_k{k}_s{seed}.csv
//! backtest/trades/{model}_k{k}_s{seed}_{stock}.csv, backtest/returns.{json,csv}
//! latency.json
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn dataset(&self, k: usize) -> PathBuf {
        self.root.join("datasets").join(format!("k{k}.lobd"))
    }

    pub fn model(&self, model: &str, k: usize, seed: u64) -> PathBuf {
        self.root
            .join("models")
            .join(format!("{model}_k{k}_s{seed}.json"))
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.root.join("predictions")
    }

    pub fn predictions(&self, model: &str, k: usize, seed: u64) -> PathBuf {
        self.predictions_dir()
            .join(prediction_file_name(model, k, seed))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn trade_log(&self, model: &str, k: usize, seed: u64, stock: &str) -> PathBuf {
        self.root
            .join("backtest")
            .join("trades")
            .join(format!("{model}_k{k}_s{seed}_{stock}.csv"))
    }

    pub fn backtest(&self, name: &str) -> PathBuf {
        self.root.join("backtest").join(name)
    }

    pub fn latency(&self) -> PathBuf {
        self.root.join("latency.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    /// Rewrites the manifest from the files currently on disk.
    pub fn write_manifest(&self) -> Result<Manifest> {
        let manifest = Manifest::scan(&self.root)?;
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_file(&self.manifest(), json.as_bytes())?;
        Ok(manifest)
    }
}

pub fn prediction_file_name(model: &str, k: usize, seed: u64) -> String {
    format!("{model}_k{k}_s{seed}.csv")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    json.push('\n');
    write_file(path, json.as_bytes())
}

pub fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32c::crc32c(bytes))
}

pub fn file_crc(path: &Path) -> Result<String> {
    fs::read(path)
        .map(|b| crc_hex(&b))
        .map_err(|e| CliError::io(path, e))
}

/// CRC32C of every file under the run directory except the manifest,
/// keyed by `/`-separated relative path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub checksum: String,
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn scan(root: &Path) -> Result<Self> {
        let mut files = BTreeMap::new();
        collect(root, root, &mut files)?;
        files.remove(MANIFEST);
        Ok(Self {
            checksum: "crc32c".into(),
            files,
        })
    }

    /// Entries whose path starts with one of `prefixes`.
    pub fn subset(&self, prefixes: &[&str]) -> BTreeMap<String, String> {
        self.files
            .iter()
            .filter(|(p, _)| prefixes.iter().any(|x| p.starts_with(x)))
            .map(|(p, c)| (p.clone(), c.clone()))
            .collect()
    }
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(rel, file_crc(&path)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_nested_files() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path());
        write_file(&run.dataset(5), b"abc").unwrap();
        write_file(&run.report("table.csv"), b"x").unwrap();
        let m = run.write_manifest().unwrap();
        assert_eq!(m.files.len(), 2);
        // CRC32C("abc")
        assert_eq!(m.files["datasets/k5.lobd"], "364b3fb7");
        assert_eq!(m.subset(&["reports/"]).len(), 1);
        // the manifest never lists itself
        assert_eq!(run.write_manifest().unwrap(), m);
    }
}
