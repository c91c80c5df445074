use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stress-voice"))
}

fn run(args: &[&str]) -> i32 {
    let out = bin().args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p);
            }
        }
    }
    out
}

/// Runs a subcommand and checks every new file landed inside `out`.
fn run_confined(root: &Path, out: &Path, args: &[&str]) {
    let before = files_under(root);
    assert_eq!(run(args), 0, "{args:?}");
    let after = files_under(root);
    for f in after.difference(&before) {
        assert!(f.starts_with(out), "{args:?} wrote {} outside {}", f.display(), out.display());
    }
    assert!(out.join("manifest.json").exists(), "{args:?} left no manifest");
}

#[test]
fn help_and_usage_exit_codes() {
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["synth", "canonicalize", "extract", "build-targets", "train", "grid", "evaluate", "attention", "histograms"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
    assert_eq!(run(&["no-such-command"]), 1);
    assert_eq!(run(&["grid", "--jobs", "x"]), 1);
}

#[test]
fn bad_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sessions.csv");
    std::fs::write(&csv, "speaker_id,audio_path\nx,a.wav\n").unwrap();
    assert_eq!(run(&["histograms", "--sessions", s(&csv), "--out", s(&dir.path().join("h"))]), 2);
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = |name: &str| root.join(name);

    run_confined(root, &p("synth"), &["synth", "--out", s(&p("synth")), "--speakers", "8", "--duration", "4", "--seed", "9"]);
    run_confined(root, &p("canon"), &["canonicalize", "--sessions", s(&p("synth/sessions.csv")), "--out", s(&p("canon"))]);
    let sessions = p("canon/sessions.csv");
    run_confined(root, &p("feat"), &["extract", "--sessions", s(&sessions), "--out", s(&p("feat"))]);
    run_confined(root, &p("targets"), &["build-targets", "--sessions", s(&sessions), "--out", s(&p("targets"))]);
    run_confined(root, &p("hist"), &["histograms", "--sessions", s(&sessions), "--out", s(&p("hist")), "--bins", "4"]);

    let grid_cfg = p("grid.json");
    std::fs::write(&grid_cfg, r#"{"train": {"max_epochs": 3, "patience": 3, "hidden": 8}, "seed": 2}"#).unwrap();
    run_confined(
        root,
        &p("grid"),
        &["grid", "--config", s(&grid_cfg), "--sessions", s(&sessions), "--features", s(&p("feat")), "--out", s(&p("grid")), "--jobs", "2"],
    );
    let results = std::fs::read_to_string(p("grid/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 9);

    let train_cfg = p("train.json");
    std::fs::write(
        &train_cfg,
        r#"{"model": "agru", "task": "mtl", "normalization": "speaker", "train": {"max_epochs": 20, "patience": 5, "hidden": 8}, "seed": 4}"#,
    )
    .unwrap();
    run_confined(
        root,
        &p("train"),
        &["train", "--config", s(&train_cfg), "--sessions", s(&sessions), "--features", s(&p("feat")), "--out", s(&p("train")), "--epochs", "4"],
    );
    let history = std::fs::read_to_string(p("train/history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,dev_mae_cortisol,dev_mae_appraisal,dev_mae_affect,dev_mae_mean\n"));
    assert_eq!(history.lines().count(), 5, "--epochs overrides the config");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("train/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["train"]["max_epochs"], 4);

    let ckpt = p("train/checkpoint.bin");
    let norm = p("train/norm.json");
    run_confined(
        root,
        &p("eval"),
        &["evaluate", "--checkpoint", s(&ckpt), "--norm", s(&norm), "--sessions", s(&sessions), "--features", s(&p("feat")), "--split", "test", "--out", s(&p("eval"))],
    );
    let metrics = std::fs::read_to_string(p("eval/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    run_confined(
        root,
        &p("attn"),
        &["attention", "--checkpoint", s(&ckpt), "--norm", s(&norm), "--sessions", s(&sessions), "--features", s(&p("feat")), "--out", s(&p("attn")), "--svg"],
    );
    assert!(p("attn/attention.svg").exists());
    assert!(std::fs::read_to_string(p("attn/attention_alpha.csv")).unwrap().starts_with("subject,t,alpha\n"));

    // mean-pooling checkpoints have no attention to report
    let gru = p("grid/checkpoints/gru-mtl-standard.bin");
    let code = run(&[
        "attention", "--checkpoint", s(&gru), "--norm", s(&p("grid/norm-standard.json")), "--sessions", s(&sessions),
        "--features", s(&p("feat")), "--out", s(&p("attn2")),
    ]);
    assert_eq!(code, 2);

    // an absurd learning rate drives the weights to overflow
    let blowup = p("blowup.json");
    std::fs::write(
        &blowup,
        r#"{"model": "gru", "task": "mtl", "normalization": "standard", "train": {"learning_rate": 1e308, "max_epochs": 5, "patience": 5, "hidden": 4}}"#,
    )
    .unwrap();
    let code = run(&["train", "--config", s(&blowup), "--sessions", s(&sessions), "--features", s(&p("feat")), "--out", s(&p("blow"))]);
    assert_eq!(code, 3);
}
