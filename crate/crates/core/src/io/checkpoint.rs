//! JSON checkpoints tagged with the configuration and mesh hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT: &str = "mechbio-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub config_hash: String,
    pub mesh_hash: String,
    /// last completed step
    pub step: usize,
    pub payload: T,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint format `{0}`")]
    Format(String),
    #[error("checkpoint was written for a different {what} (hash {found}, current {expected})")]
    HashMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
}

impl<T: Serialize + DeserializeOwned> Checkpoint<T> {
    pub fn new(config_hash: &str, mesh_hash: &str, step: usize, payload: T) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config_hash: config_hash.to_string(),
            mesh_hash: mesh_hash.to_string(),
            step,
            payload,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = serde_json::to_string(self).map_err(|source| CheckpointError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        // write-then-rename so that an interrupted save leaves the old file intact
        let tmp = path.with_extension("tmp");
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::write(&tmp, text).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    /// Loads and checks the format and both hashes.
    pub fn load(path: &Path, config_hash: &str, mesh_hash: &str) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let c: Checkpoint<T> =
            serde_json::from_str(&text).map_err(|source| CheckpointError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(c.format));
        }
        for (what, expected, found) in [
            ("configuration", config_hash, &c.config_hash),
            ("mesh", mesh_hash, &c.mesh_hash),
        ] {
            if expected != found {
                return Err(CheckpointError::HashMismatch {
                    what,
                    expected: expected.to_string(),
                    found: found.clone(),
                });
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let payload = vec![0.1, 1.0 / 3.0, -0.0, 1e-310, f64::MAX];
        Checkpoint::new("a", "m", 3, payload.clone())
            .save(&p)
            .unwrap();
        let back: Checkpoint<Vec<f64>> = Checkpoint::load(&p, "a", "m").unwrap();
        assert_eq!(back.step, 3);
        for (x, y) in back.payload.iter().zip(&payload) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn zero_state_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        Checkpoint::new("a", "m", 0, vec![0.0; 4]).save(&p).unwrap();
        let back: Checkpoint<Vec<f64>> = Checkpoint::load(&p, "a", "m").unwrap();
        assert_eq!(back.payload, vec![0.0; 4]);
    }

    #[test]
    fn mismatched_hashes_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        Checkpoint::new("a", "m", 1, 0u8).save(&p).unwrap();
        let e = Checkpoint::<u8>::load(&p, "a", "other").unwrap_err();
        assert!(matches!(
            e,
            CheckpointError::HashMismatch { what: "mesh", .. }
        ));
        let e = Checkpoint::<u8>::load(&p, "b", "m").unwrap_err();
        assert!(e.to_string().contains("configuration"));
    }
}
