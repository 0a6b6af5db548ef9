use std::path::Path;
use std::process::{Command, Output};

fn vrd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrd"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const MODEL_TOML: &str = "d_model = 4\nn_max = 3\nsubgraph_hidden = 4\nh_dim = 6\npred_hidden = 6\nkin_hidden = 4\nn_anchors = 8\nm_targets = 2\nt_steps = 4\nplanner_hidden = 4\ntraj_hidden = 6\n";

const TRAIN_TOML: &str = "epochs = 2\nwarmup_epochs = 1\nhorizon = 4\nobs_stride = 3\nseed = 3\n";

fn gen_corpus(dir: &Path) {
    let out = vrd(
        &[
            "gen-data",
            "--out",
            "corpus.jsonl",
            "--seed",
            "11",
            "--count",
            "2",
            "--mix",
            "ped_yield",
            "--obs-len",
            "8",
            "--horizon-len",
            "12",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("corpus.jsonl").exists());
}

fn train_model(dir: &Path) {
    std::fs::write(dir.join("model.toml"), MODEL_TOML).unwrap();
    std::fs::write(dir.join("train.toml"), TRAIN_TOML).unwrap();
    let out = vrd(
        &[
            "train",
            "--data",
            "corpus.jsonl",
            "--out",
            "run",
            "--config",
            "train.toml",
            "--model-config",
            "model.toml",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("run/checkpoint.json").exists());
    assert!(dir.join("run/model_config.json").exists());
    assert!(dir.join("run/train_log.csv").exists());
    assert!(dir.join("run/manifest.json").exists());
}

#[test]
fn full_pipeline_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_corpus(dir);
    train_model(dir);

    // eval writes metrics files and prints a summary
    let out = vrd(
        &["eval", "--data", "corpus.jsonl", "--model", "run", "--out", "evalrun"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("evalrun/metrics.json").exists());
    assert!(dir.join("evalrun/metrics.csv").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("minADE_1"), "{stdout}");

    // dream renders an SVG and a JSON trace
    let out = vrd(
        &[
            "dream",
            "--data",
            "corpus.jsonl",
            "--model",
            "run",
            "--out",
            "dreamrun",
            "--horizon",
            "4",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(dir.join("dreamrun/dream.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
    assert!(dir.join("dreamrun/dream.json").exists());
}

#[test]
fn dream_zero_horizon_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_corpus(dir);
    let out = vrd(
        &[
            "dream", "--data", "corpus.jsonl", "--model", "run", "--out", "x", "--horizon", "0",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("usage"), "{stderr}");
}

#[test]
fn missing_input_is_a_single_line_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vrd(&["eval", "--data", "nope.jsonl", "--model", "m", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vrd(&["eval", "--bogus"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablate_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    gen_corpus(dir);
    std::fs::write(dir.join("model.toml"), MODEL_TOML).unwrap();
    std::fs::write(dir.join("train.toml"), TRAIN_TOML).unwrap();
    let out = vrd(
        &[
            "ablate",
            "--data",
            "corpus.jsonl",
            "--out",
            "abl",
            "--config",
            "train.toml",
            "--model-config",
            "model.toml",
            "--dts",
            "0.1,0.2",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("abl/ablation.csv")).unwrap();
    assert!(csv.starts_with("horizon_s,dt,"));
    assert_eq!(csv.trim_end().lines().count(), 3, "{csv}");
}
