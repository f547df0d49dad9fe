//! Run manifests: every command writes one next to its primary output so
//! runs are reproducible and auditable. A manifest holds the command name,
//! the fully resolved configuration, content digests of every input file,
//! and the tool version. Reruns with identical manifest inputs produce
//! identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use diarkit::error::Result;
use diarkit::formats::atomic_write;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn record_input(&mut self, path: &Path, content: &str) {
        let mut hasher = Sha256::new();
        hasher.update(content.as_bytes());
        let digest = hasher.finalize();
        self.inputs
            .insert(path.display().to_string(), hex_string(&digest));
    }

    /// Write to `<primary_output>.manifest.json`.
    pub fn write_alongside(&self, primary_output: &Path) -> Result<()> {
        self.write_to(&manifest_path(primary_output))
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        atomic_write(path, &text)
    }
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output
        .file_name()
        .unwrap_or_default()
        .to_os_string();
    name.push(".manifest.json");
    primary_output.with_file_name(name)
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Read a file and record its digest in one step.
pub fn read_input(manifest: &mut RunManifest, path: &Path) -> Result<String> {
    let content = std::fs::read_to_string(path).map_err(|e| {
        diarkit::Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    manifest.record_input(path, &content);
    Ok(content)
}
