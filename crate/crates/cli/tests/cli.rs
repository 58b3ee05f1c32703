use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = "\
[model]
latent_dim = 4
encoder_hidden = 16
inference_hidden = 8

[train]
epochs = 6
warmup = 2
lr = 0.001
batch_size = 32
lambda3 = 5

[eval]
restarts = 3
eval_every = 3
";

fn hsacc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsacc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Temp dir holding a synthetic dataset `d/`, a mask and `tiny.ini`.
fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = hsacc(dir, &["synth", "--n", "60", "--k", "3", "--dims", "5,4", "--seed", "3", "--out", "d"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = hsacc(dir, &["mask", "--data", "d", "--rate", "0.4", "--seed", "1", "--out", "d"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    fs::write(dir.join("tiny.ini"), TINY).unwrap();
    tmp
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--config", "tiny.ini", "--data", "d", "--mask", "d/mask.csv", "--out", out];
    args.extend_from_slice(extra);
    hsacc(dir, &args)
}

#[test]
fn synth_writes_dataset_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let args = ["synth", "--n", "1000", "--k", "4", "--dims", "10,10", "--seed", "1", "--out"];
    for out in ["a", "b"] {
        let mut a = args.to_vec();
        a.push(out);
        assert_eq!(code(&hsacc(dir, &a)), 0);
    }
    for file in ["view_0.csv", "view_1.csv", "labels.csv"] {
        let a = fs::read(dir.join("a").join(file)).unwrap();
        assert_eq!(a, fs::read(dir.join("b").join(file)).unwrap(), "{file}");
    }
    assert_eq!(fs::read_to_string(dir.join("a/labels.csv")).unwrap().lines().count(), 1000);

    let out = hsacc(dir, &["synth", "--n", "10", "--k", "0", "--out", "c"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn mask_respects_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&hsacc(dir, &["mask", "--n", "10", "--rate", "0.5", "--seed", "7", "--out", "m"])), 0);
    let text = fs::read_to_string(dir.join("m/mask.csv")).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert_eq!(text.lines().filter(|l| l.contains('0')).count(), 5);

    assert_eq!(code(&hsacc(dir, &["mask", "--n", "10", "--rate", "0", "--out", "z"])), 0);
    let text = fs::read_to_string(dir.join("z/mask.csv")).unwrap();
    assert!(text.lines().all(|l| l == "1,1"));

    assert_eq!(code(&hsacc(dir, &["mask", "--n", "10", "--rate", "1.0", "--out", "x"])), 1);
    assert_eq!(code(&hsacc(dir, &["mask", "--rate", "0.2", "--out", "x"])), 1);
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let tmp = workspace();
    let dir = tmp.path();
    let out = train(dir, "r1", &["--set", "lambda3=10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in [
        "model.ckpt",
        "history.csv",
        "report.json",
        "manifest.json",
        "embeddings.csv",
        "assignments.csv",
        "completed_latents_view0.csv",
        "completed_latents_view1.csv",
    ] {
        assert!(dir.join("r1").join(file).exists(), "{file}");
    }
    let report = json(dir.join("r1/report.json"));
    for field in ["acc", "nmi", "ari", "k", "inertia", "seed", "config_hash"] {
        assert!(!report[field].is_null(), "{field}");
    }
    let manifest = json(dir.join("r1/manifest.json"));
    assert_eq!(manifest["config"]["train.lambda3"], "10");
    assert_eq!(manifest["config"]["train.epochs"], "6");
    let history = fs::read_to_string(dir.join("r1/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 7);

    assert_eq!(code(&train(dir, "r2", &["--set", "lambda3=10"])), 0);
    assert_eq!(
        fs::read(dir.join("r1/report.json")).unwrap(),
        fs::read(dir.join("r2/report.json")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("r1/history.csv")).unwrap(),
        fs::read(dir.join("r2/history.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("r1/model.ckpt")).unwrap(),
        fs::read(dir.join("r2/model.ckpt")).unwrap()
    );
}

#[test]
fn manifest_hash_follows_inputs() {
    let tmp = workspace();
    let dir = tmp.path();
    let hash = |out: &str| json(dir.join(out).join("manifest.json"))["input_hash"].clone();
    let base = ["--set", "epochs=2", "--set", "warmup=0"];
    assert_eq!(code(&train(dir, "a", &base)), 0);
    // Rerun with identical flags.
    fs::rename(dir.join("a"), dir.join("keep")).unwrap();
    assert_eq!(code(&train(dir, "a", &base)), 0);
    assert_eq!(hash("keep"), hash("a"));

    let mut seeded = base.to_vec();
    seeded.extend(["--seed", "5"]);
    assert_eq!(code(&train(dir, "b", &seeded)), 0);
    assert_ne!(hash("a"), hash("b"));

    let mask = fs::read_to_string(dir.join("d/mask.csv")).unwrap();
    let flipped: String = mask.replacen("1,1", "1,0", 1);
    assert_ne!(mask, flipped);
    fs::write(dir.join("d/mask.csv"), flipped).unwrap();
    assert_eq!(code(&train(dir, "c", &base)), 0);
    assert_ne!(hash("keep"), hash("c"));
}

#[test]
fn config_errors_name_key_and_line() {
    let tmp = workspace();
    let dir = tmp.path();
    fs::write(dir.join("bad.ini"), "[train]\nepochs = 3\nlr = quick\n").unwrap();
    let out = hsacc(dir, &["train", "--config", "bad.ini", "--data", "d", "--out", "r"]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains("line 3") && msg.contains("train.lr"), "{msg}");

    fs::write(dir.join("bad.ini"), "[train]\nepoch = 3\n").unwrap();
    let out = hsacc(dir, &["train", "--config", "bad.ini", "--data", "d", "--out", "r"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = train(dir, "r", &["--set", "warmup=100"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = hsacc(dir, &["train", "--config", "tiny.ini", "--data", "nowhere", "--out", "r"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert_eq!(code(&hsacc(dir, &["train", "--wat"])), 1);
}

#[test]
fn evaluate_reproduces_training_report() {
    let tmp = workspace();
    let dir = tmp.path();
    assert_eq!(code(&train(dir, "r", &["--set", "precision=f64"])), 0);
    let out = hsacc(
        dir,
        &["evaluate", "--checkpoint", "r/model.ckpt", "--data", "d", "--mask", "d/mask.csv", "--out", "e"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (a, b) = (json(dir.join("r/report.json")), json(dir.join("e/report.json")));
    for field in ["acc", "nmi", "ari", "k", "inertia", "seed"] {
        assert_eq!(a[field], b[field], "{field}");
    }
    assert_eq!(
        fs::read(dir.join("r/embeddings.csv")).unwrap(),
        fs::read(dir.join("e/embeddings.csv")).unwrap()
    );
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn ablation_grid_has_one_row_per_cell() {
    let tmp = workspace();
    let dir = tmp.path();
    let quick = ["--set", "epochs=1", "--set", "warmup=0", "--set", "eval_every=0"];
    let mut args = vec!["ablate", "--config", "tiny.ini", "--data", "d", "--out", "full"];
    args.extend(quick);
    let out = hsacc(dir, &args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(dir.join("full/ablation.csv"));
    assert_eq!(rows.len(), 15);
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels[0], "M-1");
    assert_eq!(labels[14], "M-15");
    assert_eq!(rows[14][1], "REC+INF+MMI+MMD");
    assert!(rows.iter().all(|r| r[6].is_empty() && !r[3].is_empty()));

    let mut args = vec!["ablate", "--config", "tiny.ini", "--data", "d", "--out", "one", "--set", "variants=REC+MMI"];
    args.extend(quick);
    assert_eq!(code(&hsacc(dir, &args)), 0);
    let rows = csv_rows(dir.join("one/ablation.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..3], ["M-9", "REC+MMI", "0"]);
}

#[test]
fn sweep_isolates_failing_cells() {
    let tmp = workspace();
    let dir = tmp.path();
    let out = hsacc(
        dir,
        &[
            "sweep", "--config", "tiny.ini", "--data", "d", "--out", "s", "--set", "lambdas=lambda4", "--set",
            "values=1,1e300,0.1", "--set", "sweep.seeds=0",
        ],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let rows = csv_rows(dir.join("s/sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[0][10].is_empty() && !rows[0][7].is_empty());
    assert!(rows[1][10].contains("diverged"), "{:?}", rows[1]);
    assert!(rows[2][10].is_empty() && !rows[2][7].is_empty());
    // Other weights stay at their configured values.
    assert!(rows.iter().all(|r| r[4] == "5.0"));
    assert!(dir.join("s/manifest.json").exists());

    let out = hsacc(
        dir,
        &["sweep", "--config", "tiny.ini", "--data", "d", "--out", "t", "--set", "lambdas=lambda1", "--set", "values=1"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(csv_rows(dir.join("t/sweep.csv")).len(), 1);
}
