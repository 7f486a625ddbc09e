use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_turnbeam"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn fit_then_experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    std::fs::create_dir(&models).unwrap();
    run(bin()
        .args(["fit", "--order", "1", "--corpus"])
        .arg(fixture("chat_corpus.jsonl"))
        .arg("--out")
        .arg(models.join("chat.json")));
    let matrix = dir.path().join("matrix.json");
    std::fs::write(
        &matrix,
        r#"{"model":"chat","beam_width":2,"max_tokens":5,"cells":[{"algorithm":"beam","steps":1,"partner":"egocentric"}]}"#,
    )
    .unwrap();
    let experiment = || {
        run(bin()
            .args(["experiment", "--seed", "4", "--matrix"])
            .arg(&matrix)
            .arg("--corpus")
            .arg(fixture("chat_corpus.jsonl"))
            .arg("--models-dir")
            .arg(&models))
    };
    let first = experiment();
    assert_eq!(first.lines().count(), 2);
    assert_eq!(first, experiment());
}

#[test]
fn search_and_oracle_agree_on_f2() {
    let search = run(bin().args(["search", "--model", "F2", "--partner", "transparent", "-K", "2", "-L", "1", "-T", "2"]));
    assert!(search.contains("chosen: y </s>"), "{search}");
    let oracle = run(bin().args(["oracle", "--fixture", "F2", "-T", "2", "-L", "1"]));
    assert!(oracle.contains("utterance-level argmax: x </s>"), "{oracle}");
    let optimistic = oracle.lines().skip_while(|l| !l.starts_with("optimistic")).nth(1).unwrap();
    assert!(optimistic.contains("y </s>"), "{oracle}");
}

#[test]
fn negative_lookahead_is_rejected() {
    let out = bin().args(["search", "-L", "-1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lookahead must not be negative"));
}
