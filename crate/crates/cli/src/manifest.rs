//! Output directory bookkeeping: every written file is hashed and listed in
//! `manifest.json` together with the hash of the configuration that made it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputEntry {
    pub key: String,
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub stage: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputEntry>,
    pub artifacts: Vec<ArtifactEntry>,
    pub status: String,
    /// Stage that failed; the artifacts listed are then partial.
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

/// Hash of a configuration and the contents of its inputs.
pub fn config_hash(config: &BTreeMap<String, String>, inputs: &[InputEntry]) -> String {
    let mut text = String::new();
    for (k, v) in config {
        text.push_str(&format!("{k}={v}\n"));
    }
    for i in inputs {
        text.push_str(&format!("input.{}={}\n", i.key, i.sha256));
    }
    sha256_hex(text.as_bytes())
}

/// An output directory being filled by one command.
pub struct Outputs {
    root: PathBuf,
    manifest: Manifest,
    stage: String,
}

impl Outputs {
    pub fn create(
        root: &Path,
        command: &str,
        config: BTreeMap<String, String>,
        inputs: &[(&str, &Path)],
    ) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let inputs = inputs
            .iter()
            .map(|(key, path)| {
                Ok(InputEntry {
                    key: key.to_string(),
                    name: path
                        .file_name()
                        .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                    sha256: file_sha256(path)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let hash = config_hash(&config, &inputs);
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                tool: "txnet".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config_hash: hash,
                config,
                seeds: BTreeMap::new(),
                inputs,
                artifacts: Vec::new(),
                status: "running".into(),
                failed_stage: None,
                error: None,
            },
            stage: command.into(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.manifest.config_hash
    }

    pub fn stage(&mut self, name: &str) {
        self.stage = name.into();
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.into(), seed);
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let entry = ArtifactEntry {
            path: rel.into(),
            stage: self.stage.clone(),
            sha256: sha256_hex(bytes),
        };
        match self.manifest.artifacts.iter_mut().find(|a| a.path == rel) {
            Some(a) => *a = entry,
            None => self.manifest.artifacts.push(entry),
        }
        Ok(path)
    }

    /// Serialize as pretty JSON with an added `config_hash` field. Non-object
    /// values are nested under `data`.
    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let body = serde_json::to_value(value)?;
        let mut obj = serde_json::Map::new();
        obj.insert(
            "config_hash".into(),
            self.manifest.config_hash.clone().into(),
        );
        match body {
            serde_json::Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(obj))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Write `manifest.json`, marking the run failed if `result` is an error.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        match &result {
            Ok(_) => self.manifest.status = "ok".into(),
            Err(e) => {
                self.manifest.status = "failed".into();
                self.manifest.failed_stage = Some(self.stage.clone());
                self.manifest.error = Some(format!("{e:#}"));
            }
        }
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(self.root.join("manifest.json"), text)?;
        result
    }
}
