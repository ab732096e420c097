//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use fewtensorf::checkpoint;
use fewtensorf::dataset::{
    few_shot_subset, load_scene, make_analytic_scene, ray_bank, select_views, LoadOptions, PosedImage, Scene,
    ViewSelection,
};
use fewtensorf::eval::{evaluate, export_mesh, EvalReport};
use fewtensorf::io::atomic_write;
use fewtensorf::model::Model;
use fewtensorf::train::{loss_csv, LossRecord, TrainState, Trainer};
use fewtensorf::Real;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{self, RunConfig};
use crate::manifest::{git_revision, train_seconds_near, Manifest};
use crate::{Command, Common, Failure, OrExit};

type CmdResult<T = ()> = Result<T, Failure>;

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Train { common, resume } => cmd_train(&common, resume.as_deref()),
        Command::Eval {
            common,
            checkpoint,
            views,
        } => cmd_eval(&common, &checkpoint, views),
        Command::Bench { common } => cmd_bench(&common),
        Command::Mesh {
            common,
            checkpoint,
            iso,
            resolution,
        } => cmd_mesh(&common, &checkpoint, iso, resolution),
        Command::MakeScene { common } => cmd_make_scene(&common),
    }
}

fn finish(mut cfg: RunConfig, common: &Common) -> CmdResult<RunConfig> {
    cfg = config::apply_overrides(&cfg, &common.set).or_usage()?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.trainer.seed = seed;
    }
    cfg.validate().or_usage()?;
    Ok(cfg)
}

/// Config file, then `--set`, then `--out` / `--seed`.
pub fn resolve_config(common: &Common) -> CmdResult<RunConfig> {
    let cfg = config::load(common.config.as_deref()).or_usage()?;
    finish(cfg, common)
}

fn describe_dataset(cfg: &RunConfig) -> String {
    match &cfg.dataset.root {
        Some(r) => r.display().to_string(),
        None => format!("analytic:{:?}", cfg.dataset.analytic.kind),
    }
}

pub fn load_data(cfg: &RunConfig) -> anyhow::Result<Scene> {
    match &cfg.dataset.root {
        Some(root) => Ok(load_scene(
            root,
            &LoadOptions {
                background: cfg.render.background,
                downscale: cfg.dataset.downscale,
            },
        )?),
        None => {
            if cfg.dataset.downscale != 1 {
                log::warn!("dataset.downscale ignored for analytic scenes; set dataset.analytic.width/height");
            }
            Ok(make_analytic_scene(&cfg.dataset.analytic)?.into_scene())
        }
    }
}

/// Result of one training run.
pub struct TrainOutcome {
    pub state: TrainState<Real>,
    pub log: Vec<LossRecord>,
    pub train_views: Vec<usize>,
    pub train_seconds: f64,
}

fn ckpt_path(dir: &Path, t: u64, final_t: u64) -> PathBuf {
    if t >= final_t {
        dir.join("ckpt_final.fewt")
    } else {
        dir.join(format!("ckpt_{t:06}.fewt"))
    }
}

/// Trains on the configured views, writing checkpoints, `loss.csv` and
/// `config.json` into `cfg.out_dir`.
pub fn train_run(cfg: &RunConfig, scene: &Scene, resume: Option<TrainState<Real>>) -> CmdResult<TrainOutcome> {
    let out = &cfg.out_dir;
    let (train, ids) = few_shot_subset(&scene.train, &cfg.dataset.train_views, cfg.trainer.seed).or_usage()?;
    if train.is_empty() {
        return Err(Failure::usage(anyhow!("no training views selected")));
    }
    let bank = ray_bank::<Real>(&train, cfg.render.near, cfg.render.far);
    let state = match resume {
        Some(s) => s,
        None => TrainState::new(Model::init(&cfg.model, cfg.trainer.seed).or_usage()?),
    };
    atomic_write(&out.join("config.json"), &serde_json::to_vec_pretty(cfg).or_runtime()?).or_runtime()?;
    log::info!(
        "training on {} views ({} rays), {} iterations",
        ids.len(),
        bank.len(),
        cfg.trainer.iterations
    );
    let start = Instant::now();
    let mut trainer = Trainer::new(&cfg.trainer, &cfg.render, &bank, state).or_usage()?;
    let mut log = Vec::new();
    let iterations = cfg.trainer.iterations;
    let result = trainer.run(&mut log, |st| checkpoint::save(&ckpt_path(out, st.t, iterations), st));
    let train_seconds = start.elapsed().as_secs_f64();
    atomic_write(&out.join("loss.csv"), loss_csv(&log).as_bytes()).or_runtime()?;
    result.context("training aborted").or_runtime()?;
    Ok(TrainOutcome {
        state: trainer.into_state(),
        log,
        train_views: ids,
        train_seconds,
    })
}

fn write_manifest(cfg: &RunConfig, command: &str, outcome: &TrainOutcome, wall: f64) -> CmdResult {
    let m = Manifest {
        command: command.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.trainer.seed,
        git_revision: git_revision(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset: describe_dataset(cfg),
        downscale: cfg.dataset.downscale,
        train_views: outcome.train_views.clone(),
        iterations: outcome.state.t,
        train_seconds: outcome.train_seconds,
        wall_seconds: wall,
    };
    atomic_write(&cfg.out_dir.join("manifest.json"), &serde_json::to_vec_pretty(&m).or_runtime()?).or_runtime()
}

fn load_checkpoint(path: &Path) -> CmdResult<checkpoint::Checkpoint<Real>> {
    if !path.is_file() {
        return Err(Failure::usage(anyhow!("checkpoint {} not found", path.display())));
    }
    checkpoint::load::<Real>(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .or_usage()
}

fn cmd_train(common: &Common, resume: Option<&Path>) -> CmdResult {
    let wall = Instant::now();
    let cfg = resolve_config(common)?;
    let resume = match resume {
        Some(p) => Some(load_checkpoint(p)?.into_train_state()),
        None => None,
    };
    let scene = load_data(&cfg).or_runtime()?;
    let outcome = train_run(&cfg, &scene, resume)?;
    write_manifest(&cfg, "train", &outcome, wall.elapsed().as_secs_f64())?;
    if let Some(last) = outcome.log.last() {
        println!("trained {} iterations, final loss {:.6}", outcome.state.t, last.loss.total);
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn eval_views<'a>(cfg: &RunConfig, scene: &'a Scene, selection: &ViewSelection) -> CmdResult<Vec<(usize, &'a PosedImage)>> {
    let images = scene.split(cfg.dataset.eval_split);
    let ids = select_views(images.len(), selection, cfg.trainer.seed).or_usage()?;
    if ids.is_empty() {
        return Err(Failure::usage(anyhow!(
            "no {} views to evaluate",
            cfg.dataset.eval_split.name()
        )));
    }
    Ok(ids.into_iter().map(|i| (i, &images[i])).collect())
}

fn run_eval(cfg: &RunConfig, model: &Model<Real>, views: &[(usize, &PosedImage)], train_seconds: Option<f64>) -> CmdResult<EvalReport> {
    let out = &cfg.out_dir;
    let mut report = evaluate(model, views, &cfg.render, &cfg.eval, &cfg.hash(), Some(out)).or_runtime()?;
    report.train_seconds = train_seconds;
    report.write(out).or_runtime()?;
    Ok(report)
}

fn cmd_eval(common: &Common, ckpt: &Path, views: Option<Vec<usize>>) -> CmdResult {
    let ck = load_checkpoint(ckpt)?;
    let cfg = resolve_config(common)?;
    let selection = views.map(ViewSelection::Ids).unwrap_or_else(|| cfg.dataset.test_views.clone());
    let scene = load_data(&cfg).or_runtime()?;
    let pairs = eval_views(&cfg, &scene, &selection)?;
    let report = run_eval(&cfg, &ck.model, &pairs, train_seconds_near(ckpt))?;
    println!("mean psnr {:.3} dB over {} views", report.mean_psnr, report.views.len());
    Ok(())
}

/// A bench matrix: shared base config plus named variants given as dotted
/// key overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub base: Value,
    pub variants: Vec<BenchVariant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchVariant {
    pub name: String,
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let off = serde_json::json!({"mode": "off"});
        Self {
            base: serde_json::json!({}),
            variants: vec![
                BenchVariant {
                    name: "baseline".into(),
                    set: BTreeMap::from([
                        ("trainer.lambda_occ".into(), serde_json::json!(0.0)),
                        (
                            "trainer.masks".into(),
                            serde_json::json!({"density": off, "appearance": off, "encoding": off}),
                        ),
                    ]),
                },
                BenchVariant {
                    name: "few".into(),
                    set: BTreeMap::new(),
                },
            ],
        }
    }
}

/// One row of the bench table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: String,
    pub mean_psnr: Option<f64>,
    pub train_seconds: Option<f64>,
    pub status: String,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("variant,mean_psnr,train_seconds,status\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.variant,
            r.mean_psnr.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.train_seconds.map(|v| format!("{v:.1}")).unwrap_or_default(),
            r.status.replace(',', ";")
        ));
    }
    s
}

pub fn bench_markdown(rows: &[BenchRow]) -> String {
    let mut s = String::from("| variant | mean PSNR (dB) | train seconds | status |\n|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            r.variant,
            r.mean_psnr.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
            r.train_seconds.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into()),
            r.status
        ));
    }
    s
}

fn load_bench(path: Option<&Path>) -> anyhow::Result<BenchConfig> {
    match path {
        None => Ok(BenchConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow!("invalid bench config {}: {e}", p.display()))
        }
    }
}

fn variant_config(base: &RunConfig, v: &BenchVariant) -> anyhow::Result<RunConfig> {
    if v.name.is_empty() || !v.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        bail!("variant name `{}` must be non-empty [A-Za-z0-9_-]", v.name);
    }
    let mut doc = serde_json::to_value(base)?;
    for (k, val) in &v.set {
        config::set_path(&mut doc, k, val.clone())?;
    }
    let mut cfg = config::from_value(doc)?;
    cfg.out_dir = base.out_dir.join(&v.name);
    cfg.validate()?;
    Ok(cfg)
}

fn bench_variant(cfg: &RunConfig) -> CmdResult<(EvalReport, f64)> {
    let wall = Instant::now();
    let scene = load_data(cfg).or_runtime()?;
    let outcome = train_run(cfg, &scene, None)?;
    write_manifest(cfg, "bench", &outcome, wall.elapsed().as_secs_f64())?;
    let pairs = eval_views(cfg, &scene, &cfg.dataset.test_views)?;
    let report = run_eval(cfg, &outcome.state.model, &pairs, Some(outcome.train_seconds))?;
    Ok((report, outcome.train_seconds))
}

fn cmd_bench(common: &Common) -> CmdResult {
    let bench = load_bench(common.config.as_deref()).or_usage()?;
    let base = config::from_value(bench.base.clone()).or_usage()?;
    let base = finish(base, common)?;
    let variants: Vec<(String, anyhow::Result<RunConfig>)> = bench
        .variants
        .iter()
        .map(|v| (v.name.clone(), variant_config(&base, v)))
        .collect();
    if variants.is_empty() {
        return Err(Failure::usage(anyhow!("bench config has no variants")));
    }
    let mut rows = Vec::new();
    for (name, cfg) in variants {
        log::info!("bench variant {name}");
        let row = match cfg.map_err(Failure::usage).and_then(|c| bench_variant(&c)) {
            Ok((report, secs)) => BenchRow {
                variant: name,
                mean_psnr: Some(report.mean_psnr),
                train_seconds: Some(secs),
                status: "ok".into(),
            },
            Err(f) => {
                log::error!("variant {name} failed: {:#}", f.error);
                BenchRow {
                    variant: name,
                    mean_psnr: None,
                    train_seconds: None,
                    status: format!("failed: {:#}", f.error),
                }
            }
        };
        rows.push(row);
    }
    atomic_write(&base.out_dir.join("bench.csv"), bench_csv(&rows).as_bytes()).or_runtime()?;
    let md = bench_markdown(&rows);
    atomic_write(&base.out_dir.join("bench.md"), md.as_bytes()).or_runtime()?;
    print!("{md}");
    if rows.iter().any(|r| r.status != "ok") {
        return Err(Failure::runtime(anyhow!("one or more variants failed")));
    }
    Ok(())
}

fn cmd_mesh(common: &Common, ckpt: &Path, iso: Option<f64>, resolution: Option<usize>) -> CmdResult {
    let ck = load_checkpoint(ckpt)?;
    let cfg = resolve_config(common)?;
    let iso = iso.unwrap_or(cfg.export.iso);
    let res = resolution.map(|n| [n; 3]).unwrap_or(cfg.export.resolution);
    let mesh = export_mesh(&ck.model.density, iso, res, cfg.export.dense_cap).or_usage()?;
    let path = cfg.out_dir.join("mesh.stl");
    mesh.write_stl(&path).or_runtime()?;
    println!("{} triangles written to {}", mesh.triangles.len(), path.display());
    Ok(())
}

fn cmd_make_scene(common: &Common) -> CmdResult {
    let cfg = resolve_config(common)?;
    let scene = make_analytic_scene(&cfg.dataset.analytic).or_usage()?;
    scene.write(&cfg.out_dir).or_runtime()?;
    println!(
        "wrote {} train and {} test views to {}",
        scene.train.len(),
        scene.test.len(),
        cfg.out_dir.display()
    );
    Ok(())
}
