//! Output directories: result files, the resolved config and a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    seed: u64,
    seed_from_env: bool,
    workers: usize,
    files: &'a [FileEntry],
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Resource(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Resource(format!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.into(), bytes: bytes.len(), sha256: hex(&Sha256::digest(bytes)) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Run(format!("cannot serialize {name}: {e}")))?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// Write a CSV produced by one of the `gmc_core::io` writers.
    pub fn write_csv<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> gmc_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let m = Manifest {
            tool: "gmc",
            version: env!("CARGO_PKG_VERSION"),
            core_version: gmc_core::VERSION,
            command,
            seed: cfg.seed,
            seed_from_env: std::env::var(crate::config::SEED_ENV).is_ok(),
            workers: cfg.workers,
            files: &self.files,
        };
        let mut text = serde_json::to_vec_pretty(&m).map_err(|e| CliError::Run(e.to_string()))?;
        text.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Resource(format!("cannot write {}: {e}", path.display())))
    }
}
