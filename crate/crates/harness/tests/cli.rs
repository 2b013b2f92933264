use std::path::Path;
use std::process::{Command, Output};

use simplexvq::diagnostics::read_scatter;
use simplexvq_harness::runlog::{CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, RUN_DIR_ENV};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simplexvq")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
task = "ae"
epochs = 2
batch_size = 32

[data]
items = 64
eval_items = 32

[codebook]
size = 3
dim = 4
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn missing_config_fails_with_a_message() {
    let out = cli(&["train", "missing.cfg"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing.cfg"), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_and_flag_print_usage() {
    for args in [&["frobnicate"][..], &["grad-check", "--bogus"]] {
        let out = cli(args);
        assert!(!out.status.success());
        assert!(stderr(&out).to_lowercase().contains("usage"), "{}", stderr(&out));
    }
}

#[test]
fn unknown_config_key_is_a_field_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}\n[model]\ndepth = 3\n"));
    let out = cli(&["train", &cfg, "--out", dir.path().join("r").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("depth"), "{}", stderr(&out));
}

#[test]
fn train_eval_and_export_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = dir.path().join("run");
    let out = cli(&["train", &cfg, "--seed", "3", "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in [CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE] {
        assert!(run.join(f).exists(), "{f}");
    }
    let saved = std::fs::read_to_string(run.join(CONFIG_FILE)).unwrap();
    assert!(saved.contains("seed = 3"));

    let ckpt = run.join(CHECKPOINT_FILE);
    let out = cli(&["eval", ckpt.to_str().unwrap(), &cfg, "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["usage"].as_array().unwrap().len(), 1);

    let scatter = dir.path().join("scatter");
    let out = cli(&["export-scatter", ckpt.to_str().unwrap(), "--out", scatter.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(read_scatter(scatter.join("group0.csv")).unwrap().len(), 32);
}

#[test]
fn eval_with_mismatched_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = dir.path().join("run");
    assert!(cli(&["train", &cfg, "--out", run.to_str().unwrap()]).status.success());
    let other = dir.path().join("other.toml");
    std::fs::write(&other, TINY.replace("[data]", "[data]\ndim = 5")).unwrap();
    let out = cli(&["eval", run.join(CHECKPOINT_FILE).to_str().unwrap(), other.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn export_scatter_needs_three_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("size = 3", "size = 4"));
    let run = dir.path().join("run");
    assert!(cli(&["train", &cfg, "--out", run.to_str().unwrap()]).status.success());
    let out = cli(&["export-scatter", run.join(CHECKPOINT_FILE).to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("3 codes"), "{}", stderr(&out));
}

#[test]
fn run_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_simplexvq"))
        .args(["train", &cfg])
        .env(RUN_DIR_ENV, &run)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(run.join(METRICS_FILE).exists());
}

#[test]
fn grad_check_and_demo_succeed() {
    let out = cli(&["grad-check", "--instances", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("knn_loss/ce") && text.contains("PASS"));
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["simplex-demo", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 4);
}
