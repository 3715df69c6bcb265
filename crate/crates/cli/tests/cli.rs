use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn edgeid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeid")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = edgeid(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    edgeid(args).status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn identify_matches_golden() {
    let tmp = TempDir::new().unwrap();
    let out = stdout(&[
        "identify",
        "--seed",
        "3",
        "--beta",
        "1",
        "--r-max",
        "5",
        "--out-dir",
        path(tmp.path()),
    ]);
    let golden = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/golden/identify_seed3_beta1.json"
    ))
    .unwrap();
    let got: Value = serde_json::from_str(&out).unwrap();
    let want: Value = serde_json::from_str(&golden).unwrap();
    assert_eq!(got, want);

    let trace = fs::read_to_string(tmp.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 5);
    for (k, line) in trace.lines().enumerate() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["iteration"], k + 1);
        assert_eq!(rec["accepted"], true);
    }
}

#[test]
fn generated_files_reproduce_seeded_identification() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("gen");
    stdout(&["generate", "--seed", "3", "--out-dir", path(&dir)]);
    let truth: Value = serde_json::from_str(&fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    let seeded: Value = serde_json::from_str(&stdout(&[
        "identify",
        "--seed",
        "3",
        "--full",
        "--out-dir",
        path(tmp.path()),
    ]))
    .unwrap();
    let from_files: Value = serde_json::from_str(&stdout(&[
        "identify",
        "--graph",
        path(&dir.join("graph.json")),
        "--signals",
        path(&dir.join("signals.csv")),
        "--full",
        "--out-dir",
        path(tmp.path()),
    ]))
    .unwrap();
    assert_eq!(seeded["truth"], truth);
    assert_eq!(seeded["edges"], from_files["edges"]);
}

#[test]
fn roc_csv_columns() {
    let tmp = TempDir::new().unwrap();
    stdout(&[
        "roc",
        "--seed",
        "1",
        "--trials",
        "10",
        "--vertices",
        "10",
        "--out-dir",
        path(tmp.path()),
    ]);
    let text = fs::read_to_string(tmp.path().join("roc.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "detector,threshold,pfa,pd,trials");
    let detectors: std::collections::BTreeSet<_> = lines.map(|l| l.split(',').next().unwrap().to_string()).collect();
    for d in ["lrt", "local-lrt-b1", "naive", "smsd", "bmsd"] {
        assert!(detectors.contains(d), "missing {d}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn fscore_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        stdout(&[
            "fscore",
            "--seed",
            "5",
            "--trials",
            "8",
            "--vertices",
            "12",
            "--out-dir",
            path(&dir),
        ]);
        fs::read(dir.join("fscore.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = path(tmp.path());
    assert_eq!(code(&["roc", "--trials", "2", "--out-dir", out]), 2, "missing seed");
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["identify", "--seed", "1", "--filter", "bogus"]), 3);
    assert_eq!(
        code(&["roc", "--seed", "1", "--detectors", "bogus", "--out-dir", out]),
        3
    );
    assert_eq!(code(&["roc", "--seed", "1", "--preset", "bogus", "--out-dir", out]), 3);
    assert_eq!(code(&["oracle-ml", "--seed", "1", "--r-max", "5", "--cap", "100"]), 4);
    assert_eq!(
        code(&[
            "identify",
            "--graph",
            "/nonexistent/graph.json",
            "--signals",
            "/nonexistent/s.csv"
        ]),
        5
    );

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"trials\": 3, \"unknown_field\": 1}").unwrap();
    assert_eq!(
        code(&["roc", "--seed", "1", "--config", path(&bad), "--out-dir", out]),
        6
    );
    assert_eq!(code(&["roc", "--seed", "1", "--trials", "0", "--out-dir", out]), 6);
}

#[test]
fn oracle_reports_best_hypothesis() {
    let out: Value = serde_json::from_str(&stdout(&[
        "oracle-ml",
        "--seed",
        "2",
        "--vertices",
        "8",
        "--r-max",
        "1",
        "--samples",
        "2000",
        "--sigma-w2",
        "0.1",
    ]))
    .unwrap();
    // Null plus one hypothesis per edge of an 8-vertex ring lattice (k = 2).
    assert_eq!(out["hypotheses"], 17);
    assert!(out["decision"]["hypothesis"].as_array().unwrap().len() <= 1);
    assert!(out["index"].as_u64().unwrap() < 17);
}
