// SPDX-License-Identifier: Apache-2.0

//! Run manifests: enough to replay any run that produced an output directory.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub modules: BTreeMap<String, String>,
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<String>,
    pub inputs: Vec<InputHash>,
    pub seed: Option<u64>,
    /// Seeds of individual stochastic steps, keyed by step name.
    pub seeds: BTreeMap<String, u64>,
    pub n_reps: Option<usize>,
    pub threads: usize,
    pub parameters: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
    /// Unix seconds; only set on request so repeated runs stay byte-identical.
    pub timestamp: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let modules = [
            "ingest",
            "graph",
            "core_periphery",
            "communities",
            "nullmodel",
            "synth",
            "report",
        ]
        .iter()
        .map(|m| (m.to_string(), version.clone()))
        .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            tool: "procnet".into(),
            version,
            modules,
            command: command.into(),
            args,
            config: None,
            inputs: Vec::new(),
            seed: None,
            seeds: BTreeMap::new(),
            n_reps: None,
            threads: 1,
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            timestamp: None,
        }
    }

    /// Hashes `path` and records it; `-` stands for stdin and takes the
    /// already-read bytes.
    pub fn add_input(&mut self, path: &str, bytes: Option<&[u8]>) -> Result<()> {
        let sha256 = match bytes {
            Some(b) => hex::encode(Sha256::digest(b)),
            None => sha256_file(Path::new(path))?,
        };
        self.inputs.push(InputHash {
            path: path.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn record_time(&mut self) {
        self.timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }

    /// Writes `manifest.json` into `dir`, listing every other file in it.
    pub fn write_to_dir(&mut self, dir: &Path) -> Result<PathBuf> {
        let mut outputs = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != MANIFEST_FILE && entry.path().is_file() {
                outputs.push(name);
            }
        }
        outputs.sort();
        self.outputs = outputs;
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.csv"), "x\n").unwrap();
        std::fs::write(dir.path().join("a.csv"), "y\n").unwrap();
        let mut m = RunManifest::new("null", vec!["--seed".into(), "7".into()]);
        m.seed = Some(7);
        m.add_input("-", Some(b"abc")).unwrap();
        let path = m.write_to_dir(dir.path()).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.outputs, ["a.csv", "b.csv"]);
        assert_eq!(
            back.inputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(back.timestamp.is_none());
    }
}
