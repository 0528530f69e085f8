use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one invocation, written next to its outputs. Running
/// `impnet` again with `command_line` reproduces the outputs; only the
/// timestamps differ.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub command_line: Vec<String>,
    /// Flag values after defaults were resolved.
    pub flags: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub results: BTreeMap<String, Value>,
    pub started: String,
    pub finished: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn begin(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command_line: std::env::args().skip(1).collect(),
            flags: Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            results: BTreeMap::new(),
            started: now(),
            finished: String::new(),
        }
    }

    pub fn flags(&mut self, flags: &impl Serialize) -> Result<()> {
        self.flags = serde_json::to_value(flags)?;
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: impl AsRef<Path>) {
        self.inputs.push(path.as_ref().to_path_buf());
    }

    pub fn output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().to_path_buf());
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.results.insert(key.to_string(), v);
    }

    /// Stamps the end time and writes `dir/manifest.json`.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished = now();
        let path = dir.join(MANIFEST_NAME);
        let body = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, body + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
