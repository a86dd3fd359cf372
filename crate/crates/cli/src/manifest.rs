//! Run manifest: config echo, seed, per-stage inputs and outputs with digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::PipelineError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory when the file lives inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

pub fn software_version() -> String {
    format!("fxres {} (fxres-core {})", env!("CARGO_PKG_VERSION"), fxres_core::VERSION)
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn digest(path: &Path, root: &Path) -> Result<FileDigest, PipelineError> {
    let shown: PathBuf = path.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf());
    Ok(FileDigest { path: shown.to_string_lossy().replace('\\', "/"), sha256: sha256_file(path)? })
}

impl RunManifest {
    pub fn new(seed: Option<u64>, config: BTreeMap<String, String>) -> Self {
        RunManifest { software: software_version(), seed, config, stages: Vec::new() }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| PipelineError::stage("manifest", e))
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| PipelineError::stage("manifest", e))?;
        std::fs::write(&path, text + "\n").map_err(|e| PipelineError::io(&path, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Insert or replace a stage record, keeping pipeline order.
    pub fn record(&mut self, rec: StageRecord, order: &[&str]) {
        self.stages.retain(|s| s.name != rec.name);
        self.stages.push(rec);
        let rank = |n: &str| order.iter().position(|o| *o == n).unwrap_or(order.len());
        self.stages.sort_by_key(|s| rank(&s.name));
    }

    /// A stage counts as completed when it is recorded and its outputs are
    /// still on disk with the recorded digests.
    pub fn completed(&self, name: &str, dir: &Path) -> bool {
        self.stage(name).is_some_and(|s| {
            s.outputs.iter().all(|o| {
                let p = dir.join(&o.path);
                sha256_file(&p).map(|h| h == o.sha256).unwrap_or(false)
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_replaces_and_orders() {
        let mut m = RunManifest::new(Some(1), BTreeMap::new());
        let rec = |n: &str| StageRecord { name: n.into(), seed: None, inputs: vec![], outputs: vec![], elapsed_ms: None };
        let order = ["a", "b", "c"];
        m.record(rec("c"), &order);
        m.record(rec("a"), &order);
        m.record(rec("c"), &order);
        assert_eq!(m.stages.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), vec!["a", "c"]);
    }

    #[test]
    fn digest_is_relative_and_detects_edits() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.csv");
        std::fs::write(&f, "a,b\n").unwrap();
        let d = digest(&f, dir.path()).unwrap();
        assert_eq!(d.path, "x.csv");
        assert_eq!(d.sha256.len(), 64);
        let mut m = RunManifest::new(None, BTreeMap::new());
        m.record(StageRecord { name: "s".into(), seed: None, inputs: vec![], outputs: vec![d], elapsed_ms: None }, &["s"]);
        assert!(m.completed("s", dir.path()));
        std::fs::write(&f, "a,c\n").unwrap();
        assert!(!m.completed("s", dir.path()));
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap().unwrap(), m);
    }
}
