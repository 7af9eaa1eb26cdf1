use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use voxstyle::{Error, ModelConfig, Result};

pub const RUN_RECORD: &str = "run.json";

/// The `run.json` written next to every command's outputs.
pub struct RunRecord {
    command: &'static str,
    seed: u64,
    config: Option<ModelConfig>,
    extra: Map<String, Value>,
    artifacts: Vec<PathBuf>,
}

impl RunRecord {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Self {
            command,
            seed,
            config: None,
            extra: Map::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn config(&mut self, cfg: &ModelConfig) {
        self.config = Some(cfg.clone());
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.extra.insert(key.to_string(), value.into());
    }

    pub fn artifact(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(path.into());
    }

    pub fn artifacts(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.artifacts.extend(paths);
    }

    /// Writes `run.json` into `dir`, hashing every artifact.
    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.artifacts.sort();
        self.artifacts.dedup();
        let mut hashes = Vec::with_capacity(self.artifacts.len());
        for p in &self.artifacts {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            let name = p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned();
            hashes.push(json!({ "path": name, "sha256": hex::encode(Sha256::digest(&bytes)) }));
        }
        let args: Vec<String> = std::env::args().skip(1).collect();
        let mut record = json!({
            "command": self.command,
            "args": args,
            "seed": self.seed,
            "config": self.config,
            "artifacts": hashes,
        });
        record.as_object_mut().unwrap().extend(self.extra);
        let path = dir.join(RUN_RECORD);
        let text = serde_json::to_string_pretty(&record).expect("run record serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
