//! The run configuration: one JSON document covering data, model, renderer,
//! trainer, evaluation and export settings.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fewtensorf::dataset::{AnalyticSceneConfig, Split, ViewSelection};
use fewtensorf::eval::EvalOptions;
use fewtensorf::grid::DEFAULT_DENSE_CAP;
use fewtensorf::model::ModelConfig;
use fewtensorf::render::RenderSettings;
use fewtensorf::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Scene directory in the NeRF-synthetic layout; `null` renders the
    /// analytic scene described by `analytic` in memory.
    pub root: Option<PathBuf>,
    pub analytic: AnalyticSceneConfig,
    pub downscale: usize,
    pub train_views: ViewSelection,
    pub test_views: ViewSelection,
    /// Split used for evaluation.
    pub eval_split: Split,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            root: None,
            analytic: AnalyticSceneConfig::default(),
            downscale: 1,
            train_views: ViewSelection::All,
            test_views: ViewSelection::All,
            eval_split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    pub iso: f64,
    pub resolution: [usize; 3],
    pub dense_cap: usize,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            iso: 25.0,
            resolution: [64; 3],
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub render: RenderSettings,
    pub trainer: TrainConfig,
    pub eval: EvalOptions,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/default"),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            render: RenderSettings::default(),
            trainer: TrainConfig::default(),
            eval: EvalOptions::default(),
            export: ExportConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        if self.dataset.downscale == 0 {
            bail!("dataset.downscale must be at least 1");
        }
        if self.render.n_samples < 2 {
            bail!("render.n_samples must be at least 2");
        }
        if self.model.density_rank == 0 || self.model.appearance_rank == 0 {
            bail!("model ranks must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, ignoring `out_dir` so
    /// that the same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let anchored = RunConfig {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&anchored).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

/// Parses the right-hand side of `key=value`: JSON if it parses, otherwise
/// a bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets the dotted `key` inside `doc`. Every path segment must already
/// exist, so misspelled keys are rejected.
pub fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("`{}` is not a table", parts[..i].join(".")))?;
        if !obj.contains_key(*part) {
            bail!("unknown config key `{key}`");
        }
        cur = obj.get_mut(*part).expect("checked");
    }
    *cur = value;
    Ok(())
}

/// Applies `key=value` overrides to a config.
pub fn apply_overrides(config: &RunConfig, overrides: &[String]) -> Result<RunConfig> {
    let mut doc = serde_json::to_value(config)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{o}` is not of the form key=value"))?;
        set_path(&mut doc, k.trim(), parse_value(v.trim()))?;
    }
    from_value(doc)
}

pub fn from_value(doc: Value) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| anyhow!("invalid config: {e}"))?;
    Ok(cfg)
}

/// Reads a config file; a missing path yields the defaults.
pub fn load(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow!("invalid config {}: {e}", p.display()))
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => out.push((prefix.to_string(), v.to_string())),
    }
}

/// Every config key with its default, one per line.
pub fn keys_help() -> String {
    let mut rows = Vec::new();
    flatten("", &serde_json::to_value(RunConfig::default()).expect("serializes"), &mut rows);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (override with --set key=value):\n");
    for (k, v) in rows {
        s.push_str(&format!("  {k:width$}  {v}\n"));
    }
    s
}
