//! Run manifests and atomic output files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Effective configuration and arguments.
    pub config: serde_json::Value,
    /// SHA-256 of every input file, keyed by path.
    pub input_hashes: BTreeMap<String, String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Files written next to the manifest.
    pub outputs: Vec<String>,
    /// `NLSE_LAB_THREADS`, when set.
    pub thread_cap: Option<usize>,
}

/// Collects the outputs of one subcommand in a directory and seals them
/// with `<command>.manifest.json`.
pub struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl RunDir {
    pub fn create(dir: &Path, command: &str, config: serde_json::Value) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                config,
                input_hashes: BTreeMap::new(),
                timings: BTreeMap::new(),
                outputs: Vec::new(),
                thread_cap: nlse_lab::exec::thread_cap(),
            },
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        self.manifest
            .input_hashes
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn time(&mut self, phase: &str, seconds: f64) {
        self.manifest.timings.insert(phase.to_string(), seconds);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
        self.record(name);
        Ok(path)
    }

    /// Registers a file already written into the directory.
    pub fn record(&mut self, name: &str) {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
    }

    /// Writes the manifest last; every listed output must exist.
    pub fn finish(mut self) -> CliResult<PathBuf> {
        if let Some(missing) = self.manifest.outputs.iter().find(|o| !self.dir.join(o).is_file()) {
            return Err(CliError::usage(format!("output {missing} vanished before the manifest")));
        }
        self.manifest
            .timings
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let name = format!("{}.manifest.json", self.manifest.command);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
