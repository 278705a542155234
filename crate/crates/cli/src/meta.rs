//! Run metadata written next to the outputs of every mutating command.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub seeds: Value,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub threads: usize,
    pub timestamp: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `SOURCE_DATE_EPOCH` when set, so reruns can produce identical metadata.
fn timestamp() -> String {
    let time = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    time.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub struct MetaBuilder {
    command: &'static str,
    seeds: Value,
    config: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl MetaBuilder {
    pub fn new(command: &'static str) -> Self {
        MetaBuilder {
            command,
            seeds: Value::Object(Default::default()),
            config: Value::Object(Default::default()),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds[name] = seed.into();
        self
    }

    pub fn config(mut self, config: impl Serialize) -> Self {
        self.config = serde_json::to_value(config).unwrap_or(Value::Null);
        self
    }

    pub fn input(mut self, path: impl Into<PathBuf>) -> Self {
        self.inputs.push(path.into());
        self
    }

    pub fn inputs<I: IntoIterator<Item = P>, P: Into<PathBuf>>(mut self, paths: I) -> Self {
        self.inputs.extend(paths.into_iter().map(Into::into));
        self
    }

    pub fn output(mut self, path: impl Into<PathBuf>) -> Self {
        self.outputs.push(path.into());
        self
    }

    /// Writes `<first output>.meta.json`.
    pub fn write(self) -> Result<PathBuf> {
        let first = self.outputs.first().context("run metadata needs at least one output")?;
        let mut name = first.as_os_str().to_owned();
        name.push(".meta.json");
        let meta_path = PathBuf::from(name);
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = RunMetadata {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            argv: std::env::args().collect(),
            seeds: self.seeds,
            config: self.config,
            inputs,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            threads: rayon::current_num_threads(),
            timestamp: timestamp(),
        };
        fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
            .with_context(|| format!("writing {}", meta_path.display()))?;
        Ok(meta_path)
    }
}
