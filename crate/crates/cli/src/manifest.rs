use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliResult;

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to every command's artifacts. Timestamps
/// live here and nowhere else, so artifacts stay byte-reproducible.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub seed: u64,
    pub model_hash: Option<String>,
    pub dataset_hash: Option<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub artifacts: Vec<Artifact>,
    pub config: toml::Table,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config_toml: &str) -> RunManifest {
        RunManifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            model_hash: None,
            dataset_hash: None,
            started_unix: now(),
            finished_unix: 0.0,
            artifacts: Vec::new(),
            config: toml::from_str(config_toml).expect("config snapshot is valid toml"),
        }
    }

    /// Writes `bytes` to `path` and records its hash.
    pub fn write_artifact(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(path, bytes).map_err(|e| logicnet::Error::io(path, e))?;
        self.artifacts.push(Artifact {
            file: path
                .file_name()
                .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
            sha256: logicnet::format::hash_bytes(bytes),
        });
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> CliResult<PathBuf> {
        self.finished_unix = now();
        let text = toml::to_string(&self).expect("manifest is serializable");
        std::fs::write(path, text).map_err(|e| logicnet::Error::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| logicnet::Error::io(dir, e))?;
    Ok(())
}
