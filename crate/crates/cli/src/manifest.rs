use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of every `view_*.csv` plus `labels.csv`, by file name.
pub fn dataset_hash(dir: &Path) -> Result<String, CliError> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n == "labels.csv" || (n.starts_with("view_") && n.ends_with(".csv")))
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for name in names {
        let bytes = fs::read(dir.join(&name))?;
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(format!("{:x}", h.finalize()))
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Hash of the resolved settings, as reported alongside metrics.
pub fn config_hash(snapshot: &BTreeMap<String, String>) -> String {
    sha256_hex(&serde_json::to_vec(snapshot).expect("string map serializes"))
}

#[derive(Debug, Clone, Serialize)]
pub struct HashedFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunInputs {
    pub command: String,
    pub version: String,
    pub args: Vec<String>,
    pub config_file: Option<HashedFile>,
    pub config: BTreeMap<String, String>,
    pub dataset: Option<HashedFile>,
    pub mask: Option<HashedFile>,
    pub checkpoint: Option<HashedFile>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub inputs: RunInputs,
    /// Hash of `inputs`; differs whenever any input file or flag does.
    pub input_hash: String,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(inputs: RunInputs, duration_secs: f64) -> Self {
        let input_hash = sha256_hex(&serde_json::to_vec(&inputs).expect("manifest serializes"));
        Self {
            inputs,
            input_hash,
            duration_secs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> RunInputs {
        RunInputs {
            command: "train".into(),
            version: "0.1.0".into(),
            args: vec!["--seed".into(), "1".into()],
            config_file: None,
            config: BTreeMap::from([("train.seed".to_string(), "1".to_string())]),
            dataset: Some(HashedFile {
                path: "d".into(),
                sha256: "aa".into(),
            }),
            mask: None,
            checkpoint: None,
            seed: 1,
        }
    }

    #[test]
    fn input_hash_tracks_inputs_only() {
        let a = RunManifest::new(inputs(), 1.0);
        assert_eq!(a.input_hash, RunManifest::new(inputs(), 99.0).input_hash);
        let mut other = inputs();
        other.args.push("--set".into());
        assert_ne!(a.input_hash, RunManifest::new(other, 1.0).input_hash);
        let mut other = inputs();
        other.dataset.as_mut().unwrap().sha256 = "ab".into();
        assert_ne!(a.input_hash, RunManifest::new(other, 1.0).input_hash);
    }

    #[test]
    fn dataset_hash_sees_content_changes() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("view_0.csv"), "1,2\n").unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let a = dataset_hash(dir.path()).unwrap();
        fs::write(dir.path().join("notes.txt"), "y").unwrap();
        assert_eq!(a, dataset_hash(dir.path()).unwrap());
        fs::write(dir.path().join("view_0.csv"), "1,3\n").unwrap();
        assert_ne!(a, dataset_hash(dir.path()).unwrap());
    }
}
