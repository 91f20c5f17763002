use std::path::Path;
use std::process::{Command, Output};

fn hgrec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgrec"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const QUICK: &[&str] = &["--set", "train.epochs=2", "--set", "model.dim=8", "--threads", "1"];

fn with_data(dir: &Path) {
    ok(&hgrec(
        &["synth", "-o", "data", "--users", "30", "--items", "40", "--categories", "3", "--clusters", "2", "--density", "0.15"],
        dir,
    ));
}

fn run_args<'a>(out: &'a str) -> Vec<&'a str> {
    let mut a = vec!["run", "--interactions", "data/interactions.tsv", "--categories", "data/categories.tsv", "-o", out];
    a.extend_from_slice(QUICK);
    a
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hgrec(&["synth", "-o", "a", "--seed", "3"], dir.path()));
    ok(&hgrec(&["synth", "-o", "b", "--seed", "3"], dir.path()));
    for f in ["interactions.tsv", "categories.tsv", "labels.tsv"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn run_then_replay_manifest() {
    let dir = tempfile::tempdir().unwrap();
    with_data(dir.path());
    let stdout = ok(&hgrec(&run_args("first"), dir.path()));
    assert!(stdout.contains("nDCG"));
    ok(&hgrec(&["run", "--manifest", "first/manifest.json", "-o", "second", "--threads", "1"], dir.path()));
    for f in ["metrics.csv", "checkpoint.txt", "split_train.tsv", "hypergraph_completed.tsv"] {
        assert_eq!(
            std::fs::read(dir.path().join("first").join(f)).unwrap(),
            std::fs::read(dir.path().join("second").join(f)).unwrap(),
            "{f}"
        );
    }
    // an override on top of the manifest changes the fingerprint
    ok(&hgrec(&["run", "--manifest", "first/manifest.json", "-o", "third", "--set", "train.lambda=0.1"], dir.path()));
    let m1 = std::fs::read_to_string(dir.path().join("first/manifest.json")).unwrap();
    let m3 = std::fs::read_to_string(dir.path().join("third/manifest.json")).unwrap();
    let fp = |m: &str| m.lines().find(|l| l.contains("\"fingerprint\"")).unwrap().to_string();
    assert_ne!(fp(&m1), fp(&m3));
}

#[test]
fn stage_verbs_match_run() {
    let dir = tempfile::tempdir().unwrap();
    with_data(dir.path());
    ok(&hgrec(&run_args("full"), dir.path()));
    let mut ingest = vec!["ingest", "--interactions", "data/interactions.tsv", "--categories", "data/categories.tsv", "-o", "staged"];
    ingest.extend_from_slice(QUICK);
    ok(&hgrec(&ingest, dir.path()));
    for verb in ["split", "build", "complete", "sample", "train", "eval"] {
        let mut a = vec![verb, "-o", "staged"];
        a.extend_from_slice(QUICK);
        ok(&hgrec(&a, dir.path()));
    }
    for f in ["metrics.csv", "checkpoint.txt", "views.tsv", "completion.tsv"] {
        assert_eq!(
            std::fs::read(dir.path().join("full").join(f)).unwrap(),
            std::fs::read(dir.path().join("staged").join(f)).unwrap(),
            "{f}"
        );
    }
    // evaluating under a different configuration is refused
    let out = hgrec(&["eval", "-o", "staged", "--set", "model.dim=8", "--set", "train.epochs=9"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repeats_write_summary() {
    let dir = tempfile::tempdir().unwrap();
    with_data(dir.path());
    let mut a = run_args("rep");
    a.extend_from_slice(&["--repeats", "2"]);
    let stdout = ok(&hgrec(&a, dir.path()));
    assert!(stdout.contains("repeat 1"));
    let summary = std::fs::read_to_string(dir.path().join("rep/summary.csv")).unwrap();
    assert!(summary.starts_with("K,metric,mean,std"));
    assert!(dir.path().join("rep/repeat_0/metrics.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    with_data(dir.path());
    let missing = hgrec(
        &["run", "--interactions", "data/interactions.tsv", "--categories", "data/none.tsv", "-o", "x"],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(3));
    let err = String::from_utf8_lossy(&missing.stderr);
    assert!(err.contains("ingest") && err.contains("none.tsv"), "{err}");

    assert_eq!(hgrec(&["run", "--set", "split.train=0.5"], dir.path()).status.code(), Some(2));
    assert_eq!(hgrec(&["run", "--set", "no.such.key=1"], dir.path()).status.code(), Some(2));
    assert_eq!(hgrec(&["run", "--set", "novalue"], dir.path()).status.code(), Some(2));
    assert_eq!(hgrec(&["run", "-o", "y"], dir.path()).status.code(), Some(2));
    // a stage run before its inputs exist is a data error
    assert_eq!(hgrec(&["build", "-o", "empty"], dir.path()).status.code(), Some(3));
}

#[test]
fn config_layers() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"train.epochs": 4, "walk.steps": 9, "model.dim": 16}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hgrec"))
        .args(["config", "--config", "c.json", "--set", "model.dim=32"])
        .env("HGREC_WALK_STEPS", "11")
        .current_dir(dir.path())
        .output()
        .unwrap();
    let text = ok(&out);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["train.epochs"], 4);
    assert_eq!(v["walk.steps"], 11);
    assert_eq!(v["model.dim"], 32);
}

#[test]
fn check_verb_passes() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&hgrec(&["check"], dir.path()));
    assert_eq!(text.lines().count(), 7);
    assert!(!text.contains("FAILED"));
}
