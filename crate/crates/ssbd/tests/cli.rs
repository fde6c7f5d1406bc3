//! End-to-end tests for the ssbd binary: transcript round trips, report
//! shape, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ssbd::fixtures::random_table_fixture;
use ssbd::metrics::REPORT_HEADER;
use ssbd::model::ModelFile;
use ssbd::stream::{lag_k_updates, load_transcript};

fn ssbd_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssbd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_fixture(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let fixture = random_table_fixture(seed, "s0001");
    let model_path = dir.join("model.json");
    ModelFile::Table(fixture.model).save(&model_path).unwrap();
    let transcript_path = dir.join("in.jsonl");
    let mut text = String::new();
    for u in &fixture.updates {
        text.push_str(&serde_json::to_string(u).unwrap());
        text.push('\n');
    }
    std::fs::write(&transcript_path, text).unwrap();
    (model_path, transcript_path)
}

#[test]
fn lagk_output_round_trips_through_the_transcript_loader() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "w1 w2 w3 w4 w5\nw6 w7 w8\n").unwrap();
    let out = dir.path().join("out.jsonl");
    let output = ssbd_cmd(&[
        "lagk",
        "--corpus",
        corpus.to_str().unwrap(),
        "--k",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let loaded = load_transcript(&out).unwrap();
    let want = vec![
        lag_k_updates("s0001", &["w1", "w2", "w3", "w4", "w5"], 2).unwrap(),
        lag_k_updates("s0002", &["w6", "w7", "w8"], 2).unwrap(),
    ];
    assert_eq!(loaded, want);
}

#[test]
fn run_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (model, transcript) = write_fixture(dir.path(), 21);
    let trace = dir.path().join("trace.jsonl");
    let report = dir.path().join("report.csv");
    let output = ssbd_cmd(&[
        "run",
        "--model",
        model.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
        "--beta",
        "0.5",
        "--trace",
        trace.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let trace_text = std::fs::read_to_string(&trace).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace_text.lines().next().unwrap()).unwrap();
    for key in ["session", "t", "input", "output", "accepted", "draft_len", "erasure"] {
        assert!(first.get(key).is_some(), "trace record has {key}");
    }

    let report_text = std::fs::read_to_string(&report).unwrap();
    let mut lines = report_text.lines();
    assert_eq!(lines.next(), Some(REPORT_HEADER));
    let last = report_text.lines().last().unwrap();
    assert!(last.starts_with("ALL,"), "aggregate row closes the report: {last}");
}

#[test]
fn compare_emits_matching_rows_for_ar_and_each_beta() {
    let dir = tempfile::tempdir().unwrap();
    let (model, transcript) = write_fixture(dir.path(), 33);
    let report = dir.path().join("report.csv");
    let output = ssbd_cmd(&[
        "compare",
        "--model",
        model.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
        "--beta-grid",
        "0.0,0.5",
        "--no-timing",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));

    let text = std::fs::read_to_string(&report).unwrap();
    let betas: Vec<&str> = text
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("ALL,"))
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(betas, ["0.0000", "0.5000"]);
    // Beta 0 is lossless, so its speedup column must be present and >= 1.
    let row0 = text.lines().find(|l| l.starts_with("ALL,0.0000")).unwrap();
    let speedup: f64 = row0.split(',').nth(9).unwrap().parse().unwrap();
    assert!(speedup >= 1.0, "beta 0 speedup {speedup}");
}

#[test]
fn invalid_beta_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (model, transcript) = write_fixture(dir.path(), 4);
    let output = ssbd_cmd(&[
        "run",
        "--model",
        model.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
        "--beta",
        "1.5",
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("out of range"));
}

#[test]
fn missing_model_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, transcript) = write_fixture(dir.path(), 4);
    let output = ssbd_cmd(&[
        "run",
        "--model",
        dir.path().join("absent.json").to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("ssbd:"));
}
