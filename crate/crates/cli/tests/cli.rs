//! End-to-end runs of the `fewt` binary on a tiny analytic scene.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fewt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fewt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn fewt")
}

fn tiny_config(dir: &Path) -> String {
    let cfg = serde_json::json!({
        "dataset": {
            "analytic": {"width": 16, "height": 16, "n_train": 3, "n_test": 4, "samples_per_ray": 64}
        },
        "model": {
            "resolution": [8, 8, 8], "density_rank": 2, "appearance_rank": 3,
            "feature_dim": 4, "decoder_hidden": [8], "density_shift": -2.0
        },
        "render": {"n_samples": 16},
        "trainer": {"iterations": 4, "ray_batch_size": 32},
        "export": {"resolution": [12, 12, 12]}
    });
    let path = dir.join("tiny.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_config_keys() {
    let out = fewt(&["train", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["--set", "--seed", "trainer.iterations", "model.factorization", "render.n_samples"] {
        assert!(text.contains(key), "{key} missing from help");
    }
}

#[test]
fn train_honours_iteration_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    let out = fewt(&["train", "--config", &cfg, "--set", "trainer.iterations=10", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    let mut lines = loss.lines();
    assert!(lines.next().unwrap().starts_with("iter,"));
    assert_eq!(lines.count(), 10);
    assert!(run.join("ckpt_final.fewt").is_file());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["iterations"], 10);
    assert_eq!(manifest["seed"], 0);
}

#[test]
fn identical_invocations_share_a_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let hash = |name: &str| {
        let run = dir.path().join(name);
        assert!(fewt(&["train", "--config", &cfg, "--seed", "3", "--out", s(&run)]).status.success());
        let m: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["seed"], 3);
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash("a"), hash("b"));
}

#[test]
fn missing_checkpoint_is_a_usage_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("eval");
    let missing = dir.path().join("nope.fewt");
    for sub in ["eval", "mesh"] {
        let out = fewt(&[sub, "--config", &cfg, "--checkpoint", s(&missing), "--out", s(&run)]);
        assert_eq!(out.status.code(), Some(2), "{sub}");
        assert!(!run.exists(), "{sub} left outputs behind");
    }
}

#[test]
fn unknown_key_and_bad_flag_exit_two() {
    let out = fewt(&["train", "--set", "trainer.iteratons=3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fewt(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_selected_views_and_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    assert!(fewt(&["train", "--config", &cfg, "--out", s(&run)]).status.success());
    let ckpt = run.join("ckpt_final.fewt");

    let ev = dir.path().join("ev");
    let out = fewt(&["eval", "--config", &cfg, "--checkpoint", s(&ckpt), "--views", "0,3", "--out", s(&ev)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(ev.join("report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,") && rows[1].starts_with("3,"));
    assert!(ev.join("test_000.png").is_file() && ev.join("test_003.png").is_file());
    let json: serde_json::Value = serde_json::from_slice(&fs::read(ev.join("report.json")).unwrap()).unwrap();
    assert!(json["train_seconds"].is_number());

    let out = fewt(&["eval", "--config", &cfg, "--checkpoint", s(&ckpt), "--views", "9", "--out", s(&ev)]);
    assert_eq!(out.status.code(), Some(2));

    let me = dir.path().join("me");
    let out = fewt(&["mesh", "--config", &cfg, "--checkpoint", s(&ckpt), "--iso", "0.5", "--out", s(&me)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stl = fs::read(me.join("mesh.stl")).unwrap();
    let n = u32::from_le_bytes(stl[80..84].try_into().unwrap()) as usize;
    assert_eq!(stl.len(), 84 + 50 * n);
}

#[test]
fn corrupt_and_future_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    assert!(fewt(&["train", "--config", &cfg, "--out", s(&run)]).status.success());
    let bytes = fs::read(run.join("ckpt_final.fewt")).unwrap();

    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&99u32.to_le_bytes());
    let fpath = dir.path().join("future.fewt");
    fs::write(&fpath, &future).unwrap();
    let out = fewt(&["eval", "--config", &cfg, "--checkpoint", s(&fpath), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 99"));

    let cpath = dir.path().join("cut.fewt");
    fs::write(&cpath, &bytes[..bytes.len() / 2]).unwrap();
    let out = fewt(&["train", "--config", &cfg, "--resume", s(&cpath), "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resume_continues_to_the_configured_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let full = dir.path().join("full");
    assert!(fewt(&["train", "--config", &cfg, "--set", "trainer.iterations=8", "--out", s(&full)]).status.success());

    let part = dir.path().join("part");
    let args = ["--set", "trainer.iterations=8", "--set", "trainer.checkpoint_every=4"];
    let mut a = vec!["train", "--config", &cfg, "--out", s(&part)];
    a.extend(args);
    assert!(fewt(&a).status.success());
    let resumed = dir.path().join("resumed");
    let ck = part.join("ckpt_000004.fewt");
    let mut b = vec!["train", "--config", &cfg, "--resume", s(&ck), "--out", s(&resumed)];
    b.extend(args);
    assert!(fewt(&b).status.success());
    assert_eq!(
        fs::read(full.join("ckpt_final.fewt")).unwrap(),
        fs::read(resumed.join("ckpt_final.fewt")).unwrap()
    );
    assert_eq!(fs::read_to_string(resumed.join("loss.csv")).unwrap().lines().count(), 1 + 4);
}

#[test]
fn make_scene_writes_a_loadable_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let scene = dir.path().join("scene");
    assert!(fewt(&["make-scene", "--config", &cfg, "--out", s(&scene)]).status.success());
    assert!(scene.join("transforms_train.json").is_file());
    assert!(scene.join("test/r_003.png").is_file());

    let run = dir.path().join("run");
    let root = format!("dataset.root=\"{}\"", s(&scene));
    let out = fewt(&["train", "--config", &cfg, "--set", &root, "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
