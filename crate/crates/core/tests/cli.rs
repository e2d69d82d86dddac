//! End-to-end runs of the `igkw` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn igkw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igkw"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_dir(parent: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(parent)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn small_corpus(dir: &Path) {
    let out = igkw(
        dir,
        &[
            "synth",
            "--out",
            "c.jsonl",
            "--docs-per-class",
            "40",
            "--vocab-size",
            "300",
            "--seed",
            "5",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_run_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    assert!(dir.join("c.jsonl.markers.json").exists());

    std::fs::write(
        dir.join("cfg.txt"),
        "rounds = 3\ntop_n = 8\nmin_doc_freq = 2\nmaster_seed = 4\n",
    )
    .unwrap();
    let out = igkw(
        dir,
        &[
            "run",
            "--corpus",
            "c.jsonl",
            "--config",
            "cfg.txt",
            "--markers",
            "c.jsonl.markers.json",
            "--out-dir",
            "runs",
            "--top-m",
            "5",
            "--workers",
            "2",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = run_dir(&dir.join("runs"));
    assert!(run
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .ends_with("-seed4"));
    for name in [
        "keywords.tsv",
        "keywords.json",
        "keywords.md",
        "f1_summary.tsv",
        "uniqueness.json",
        "recovery.json",
        "aggregate.tsv",
        "aggregate.json",
        "config.txt",
        "rounds/round-0002.json",
    ] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let config = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(config.contains("rounds = 3\n") && config.contains("workers = 2\n"));

    let before: Vec<Vec<u8>> = ["keywords.tsv", "f1_summary.tsv", "aggregate.tsv"]
        .iter()
        .map(|n| std::fs::read(run.join(n)).unwrap())
        .collect();
    let out = igkw(
        dir,
        &[
            "report",
            "--run-dir",
            run.to_str().unwrap(),
            "--format",
            "tsv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(out.stdout, before[0]);
    let after: Vec<Vec<u8>> = ["keywords.tsv", "f1_summary.tsv", "aggregate.tsv"]
        .iter()
        .map(|n| std::fs::read(run.join(n)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn command_line_overrides_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    std::fs::write(dir.join("cfg.txt"), "rounds = 5\nmaster_seed = 1\n").unwrap();
    let out = igkw(
        dir,
        &[
            "run",
            "--corpus",
            "c.jsonl",
            "--config",
            "cfg.txt",
            "--rounds",
            "2",
            "--out-dir",
            "runs",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = run_dir(&dir.join("runs"));
    let config = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(config.contains("rounds = 2\n"));
    assert!(config.contains("master_seed = 1\n"));
    assert!(run.join("rounds/round-0001.json").exists());
    assert!(!run.join("rounds/round-0002.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    let code = |args: &[&str]| igkw(dir, args).status.code();

    assert_eq!(
        code(&["run", "--corpus", "c.jsonl", "--split-ratio", "1.5"]),
        Some(1)
    );
    assert_eq!(code(&["run", "--no-such-flag"]), Some(1));
    assert_eq!(
        code(&["run", "--corpus", "c.jsonl", "--labels", "C0"]),
        Some(1)
    );
    std::fs::write(dir.join("bad.txt"), "rounds = 2\nnonsense\n").unwrap();
    assert_eq!(
        code(&["run", "--corpus", "c.jsonl", "--config", "bad.txt"]),
        Some(1)
    );
    assert_eq!(code(&["run", "--corpus", "missing.jsonl"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
}

#[test]
fn check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = igkw(tmp.path(), &["check", "--triples", "20", "--steps", "100"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
