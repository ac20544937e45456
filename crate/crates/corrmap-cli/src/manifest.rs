//! Run manifests: a machine-readable record of what produced each output.
//!
//! A manifest is written atomically (temp file + rename) before any result
//! file, and every result references its manifest: file outputs get a
//! sibling `<out>.manifest.json`, stdout results embed the manifest object
//! directly. Manifests carry no timestamps, so reruns with identical inputs
//! produce identical bytes.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use corrmap::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// The invoked subcommand with its arguments.
    pub command: Vec<String>,
    /// FNV-1a over the resolved configuration JSON.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(config_hash: u64) -> Self {
        RunManifest {
            command: std::env::args().collect(),
            config_hash: format!("{config_hash:016x}"),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seeds.push(seed);
        self
    }

    pub fn seeds(mut self, seeds: &[u64]) -> Self {
        self.seeds.extend_from_slice(seeds);
        self
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 64 * 1024];
        loop {
            let read = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
            if read == 0 {
                break;
            }
            hasher.update(&buf[..read]);
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hex,
        });
        Ok(self)
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Atomic write next to the primary output; call before writing results.
    pub fn write_for(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary_output);
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary_output.with_file_name(name)
}
