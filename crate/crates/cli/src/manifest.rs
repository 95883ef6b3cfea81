//! Run provenance: what was trained, from which inputs, and where it went.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.ini";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Paths other than `corpus` are relative to the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub schedule: String,
    pub corpus: PathBuf,
    pub corpus_hash: String,
    pub checkpoints: Vec<PathBuf>,
    pub metrics: PathBuf,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Load and check both recorded hashes against the files on disk.
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let config = sha256_file(&dir.join(CONFIG_FILE))?;
        if config != m.config_hash {
            return Err(CliError::Data(format!("{}: config hash mismatch", dir.display())));
        }
        let corpus = sha256_file(&m.corpus)?;
        if corpus != m.corpus_hash {
            return Err(CliError::Data(format!("{}: corpus {} changed since training", dir.display(), m.corpus.display())));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_are_checked_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        std::fs::write(&corpus, "corpus").unwrap();
        std::fs::write(dir.path().join(CONFIG_FILE), "seed = 1\n").unwrap();
        let m = RunManifest {
            config_hash: sha256_file(&dir.path().join(CONFIG_FILE)).unwrap(),
            seed: 1,
            schedule: "joint".into(),
            corpus: corpus.clone(),
            corpus_hash: sha256_file(&corpus).unwrap(),
            checkpoints: vec![],
            metrics: METRICS_FILE.into(),
        };
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
        std::fs::write(&corpus, "changed").unwrap();
        assert!(RunManifest::load(dir.path()).is_err());
    }

    #[test]
    fn sha256_matches_known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
