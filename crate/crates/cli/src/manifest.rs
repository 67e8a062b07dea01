//! Run manifest embedded in every artifact the CLI writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use adyn_core::TraitGraphModel;
use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub model: Option<String>,
    pub overrides: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub output_dir: Option<String>,
    pub tool_version: &'static str,
    /// SHA-256 of the canonical model JSON after overrides.
    pub config_hash: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            model: None,
            overrides: BTreeMap::new(),
            parameters: BTreeMap::new(),
            seed: None,
            output_dir: None,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_hash: None,
        }
    }

    pub fn with_model(mut self, path: &Path, model: &TraitGraphModel) -> Self {
        self.model = Some(path.display().to_string());
        self.config_hash = Some(hex::encode(Sha256::digest(model.to_json().as_bytes())));
        self
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    fn line(&self) -> String {
        serde_json::to_string(self).expect("manifest serialises")
    }

    /// Attach the manifest to a JSON object under `manifest`.
    pub fn json(&self, mut value: Value) -> String {
        if let Value::Object(map) = &mut value {
            map.insert("manifest".into(), serde_json::to_value(self).expect("manifest serialises"));
        }
        let mut text = serde_json::to_string_pretty(&value).expect("report serialises");
        text.push('\n');
        text
    }

    pub fn csv(&self, body: &str) -> String {
        format!("# manifest {}\n{body}", self.line())
    }

    pub fn dot(&self, body: &str) -> String {
        format!("// manifest {}\n{body}", self.line())
    }
}

/// Output directory for file-producing commands.
pub struct OutDir(pub PathBuf);

impl OutDir {
    pub fn create(path: PathBuf) -> Result<Self> {
        fs::create_dir_all(&path).with_context(|| format!("cannot create output directory {}", path.display()))?;
        Ok(OutDir(path))
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.0.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        println!("{}", path.display());
        Ok(())
    }
}
