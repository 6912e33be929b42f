use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hesslens::Result;
use serde::Serialize;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    /// Paths relative to the output directory, sorted.
    pub outputs: Vec<String>,
    pub input_hashes: BTreeMap<String, String>,
}

/// An output directory that remembers what was written into it.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
    inputs: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: vec![],
            inputs: BTreeMap::new(),
        })
    }

    /// Path for the output `name` (relative, may contain `/`), creating parents.
    pub fn file(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(p)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(name)?;
        fs::write(p, contents)?;
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s)
    }

    pub fn record_inputs(&mut self, hashes: impl IntoIterator<Item = (String, String)>) {
        self.inputs.extend(hashes);
    }

    pub fn finish(mut self, command: &str, config: &impl Serialize, seed: u64) -> Result<()> {
        self.files.sort();
        let m = RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.files.clone(),
            input_hashes: std::mem::take(&mut self.inputs),
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        fs::write(self.root.join(MANIFEST_NAME), s)?;
        Ok(())
    }
}
