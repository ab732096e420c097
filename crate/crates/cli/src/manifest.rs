use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

/// Provenance of one run, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub git_revision: Option<String>,
    pub tool_version: String,
    pub dataset: String,
    pub downscale: usize,
    pub train_views: Vec<usize>,
    pub iterations: u64,
    pub train_seconds: f64,
    pub wall_seconds: f64,
}

/// `git rev-parse HEAD` of the working directory, if it is a repository.
pub fn git_revision() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Training time recorded next to a checkpoint, if any.
pub fn train_seconds_near(checkpoint: &Path) -> Option<f64> {
    let path = checkpoint.parent()?.join("manifest.json");
    let m: Manifest = serde_json::from_slice(&std::fs::read(path).ok()?).ok()?;
    Some(m.train_seconds)
}
