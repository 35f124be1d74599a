//! Run manifest: what ran, with which resolved inputs, and what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde_json::{json, Map, Value};

pub const FILE_NAME: &str = "manifest.json";

pub struct Manifest {
    command: String,
    started: DateTime<Utc>,
    config: Map<String, Value>,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn start(command: &str) -> Self {
        Manifest { command: command.to_string(), started: Utc::now(), config: Map::new(), seed: None, outputs: Vec::new() }
    }

    pub fn config(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn outputs(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    /// Writes `manifest.json` into `dir` through a temporary file and a rename.
    pub fn finish(self, dir: &Path) -> std::io::Result<PathBuf> {
        let stamp = |t: DateTime<Utc>| t.to_rfc3339_opts(SecondsFormat::Millis, true);
        let doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "started": stamp(self.started),
            "finished": stamp(Utc::now()),
            "config": self.config,
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        let path = dir.join(FILE_NAME);
        let tmp = dir.join(format!(".{FILE_NAME}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(&doc)? + "\n")?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
