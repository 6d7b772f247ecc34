//! End-to-end checks of the binary: exit codes, output formats, and
//! determinism of file outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iblt"))
}

fn write_x3(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("x3.json");
    fs::write(&path, r#"{"terms": [{"degree": 3, "prob": 1.0}]}"#).unwrap();
    path
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn threshold_reports_x3() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_x3(dir.path());
    let out = bin()
        .args(["threshold", "--dist"])
        .arg(&dist)
        .output()
        .unwrap();
    assert!(out.status.success());
    let payload: serde_json::Value = serde_json::from_str(stdout_str(&out).trim()).unwrap();
    let eta = payload["eta_star"].as_f64().unwrap();
    assert!((eta - 0.8185).abs() < 2e-3, "eta_star = {eta}");
    // Config echo lands on stderr, one machine-readable line.
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert!(err.lines().any(|l| l.starts_with("CONFIG {")));
}

#[test]
fn malformed_distribution_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ not json").unwrap();
    let out = bin()
        .args(["threshold", "--dist"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let path = dir.path().join("nonunit.json");
    fs::write(&path, r#"{"terms": [{"degree": 3, "prob": 0.4}]}"#).unwrap();
    let out = bin()
        .args(["threshold", "--dist"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_file_exits_2() {
    let out = bin()
        .args(["threshold", "--dist", "/nonexistent/x.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_x3(dir.path());
    let out = bin()
        .args(["threshold", "--dist"])
        .arg(&dist)
        .args(["--bogus", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn de_trace_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_x3(dir.path());
    let out = bin()
        .args(["de-trace", "--dist"])
        .arg(&dist)
        .args(["--eta", "0.7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,p,q"));
    assert_eq!(lines.next(), Some("0,1,1"));
    assert!(text.lines().count() > 3);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_x3(dir.path());
    let run = || {
        bin()
            .args(["simulate", "--dist"])
            .arg(&dist)
            .args([
                "--m", "200", "--eta", "0.85", "--trials", "30", "--seed", "9",
            ])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let payload: serde_json::Value = serde_json::from_str(stdout_str(&a).trim()).unwrap();
    assert_eq!(payload["n"].as_u64(), Some(170));
    assert_eq!(payload["trials"].as_u64(), Some(30));
}

#[test]
fn sweep_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let dists = dir.path().join("dists");
    fs::create_dir(&dists).unwrap();
    write_x3(&dists);
    fs::write(
        dists.join("x4.json"),
        r#"{"terms": [{"degree": 4, "prob": 1.0}]}"#,
    )
    .unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let st = bin()
            .args(["sweep", "--dists"])
            .arg(&dists)
            .args([
                "--m",
                "100",
                "--eta-from",
                "0.5",
                "--eta-to",
                "0.9",
                "--eta-step",
                "0.2",
            ])
            .args(["--trials", "10", "--seed", "3", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = fs::read(&out_a).unwrap();
    assert_eq!(a, fs::read(&out_b).unwrap());
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "dist_id,eta,n,trials,failed_pairs,total_pairs,pe,ci_lo,ci_hi"
    );
    // Canonical ordering: dist ids sorted, then loads ascending.
    assert!(lines[1].starts_with("x3,0.5,"));
    assert!(lines[2].starts_with("x3,0.7,"));
    assert!(lines[3].starts_with("x3,0.9,"));
    assert!(lines[4].starts_with("x4,0.5,"));
    assert_eq!(lines.len(), 7);
}

#[test]
fn encode_recover_round_trips_below_threshold() {
    // Load 0.718 at m = 1000: a tenth under the x^3 threshold.
    let dir = tempfile::tempdir().unwrap();
    let dist = write_x3(dir.path());
    let values = dir.path().join("values.hex");
    let mut text = String::new();
    for i in 0..718u32 {
        let mut v = [0u8; 16];
        v[..4].copy_from_slice(&i.to_le_bytes());
        v[4] = 0xA5;
        text.push_str(&hex::encode(v));
        text.push('\n');
    }
    fs::write(&values, &text).unwrap();
    let table = dir.path().join("table.bin");
    let st = bin()
        .args(["encode", "--dist"])
        .arg(&dist)
        .args(["--m", "1000", "--seed", "11", "--values"])
        .arg(&values)
        .arg("--out")
        .arg(&table)
        .status()
        .unwrap();
    assert!(st.success());

    let out = bin()
        .args(["recover", "--table"])
        .arg(&table)
        .output()
        .unwrap();
    assert!(out.status.success());
    let payload: serde_json::Value = serde_json::from_str(stdout_str(&out).trim()).unwrap();
    assert_eq!(payload["complete"].as_bool(), Some(true));
    let mut got: Vec<String> = payload["recovered"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    got.sort();
    let mut want: Vec<String> = text.lines().map(|s| s.to_string()).collect();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn reconcile_lists_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_x3(dir.path());
    let value_line = |tag: u32| {
        let mut v = [0u8; 16];
        v[..4].copy_from_slice(&tag.to_le_bytes());
        hex::encode(v)
    };
    let shared: Vec<String> = (0..40).map(value_line).collect();
    let a_only: Vec<String> = (1000..1005).map(value_line).collect();
    let b_only: Vec<String> = (2000..2005).map(value_line).collect();
    let file_a = dir.path().join("a.hex");
    let file_b = dir.path().join("b.hex");
    fs::write(
        &file_a,
        format!("{}\n{}\n", shared.join("\n"), a_only.join("\n")),
    )
    .unwrap();
    fs::write(
        &file_b,
        format!("{}\n{}\n", shared.join("\n"), b_only.join("\n")),
    )
    .unwrap();
    for (file, out) in [(&file_a, "a.bin"), (&file_b, "b.bin")] {
        let st = bin()
            .args(["encode", "--dist"])
            .arg(&dist)
            .args(["--m", "200", "--seed", "5", "--values"])
            .arg(file)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(st.success());
    }
    let diff = dir.path().join("diff.json");
    let st = bin()
        .args(["reconcile", "--table-a"])
        .arg(dir.path().join("a.bin"))
        .arg("--table-b")
        .arg(dir.path().join("b.bin"))
        .arg("--out")
        .arg(&diff)
        .status()
        .unwrap();
    assert!(st.success());
    let payload: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&diff).unwrap()).unwrap();
    assert_eq!(payload["complete"].as_bool(), Some(true));
    let side = |k: &str| -> Vec<String> {
        payload[k]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect()
    };
    let mut got_a = side("only_in_a");
    let mut got_b = side("only_in_b");
    got_a.sort();
    got_b.sort();
    let mut want_a = a_only.clone();
    let mut want_b = b_only.clone();
    want_a.sort();
    want_b.sort();
    assert_eq!(got_a, want_a);
    assert_eq!(got_b, want_b);
}

#[test]
fn reconcile_rejects_mismatched_tables() {
    let dir = tempfile::tempdir().unwrap();
    let dist = write_x3(dir.path());
    let values = dir.path().join("v.hex");
    fs::write(&values, format!("{}\n", hex::encode([1u8; 16]))).unwrap();
    for (m, name) in [("100", "a.bin"), ("101", "b.bin")] {
        let st = bin()
            .args(["encode", "--dist"])
            .arg(&dist)
            .args(["--m", m, "--seed", "5", "--values"])
            .arg(&values)
            .arg("--out")
            .arg(dir.path().join(name))
            .status()
            .unwrap();
        assert!(st.success());
    }
    let out = bin()
        .args(["reconcile", "--table-a"])
        .arg(dir.path().join("a.bin"))
        .arg("--table-b")
        .arg(dir.path().join("b.bin"))
        .arg("--out")
        .arg(dir.path().join("d.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn optimize_single_degree_outputs_regular() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("best.json");
    let st = bin()
        .args([
            "optimize",
            "--degrees",
            "3",
            "--steps",
            "5",
            "--seed",
            "1",
            "--out",
        ])
        .arg(&out_path)
        .status()
        .unwrap();
    assert!(st.success());
    let payload: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(payload["terms"][0]["degree"].as_u64(), Some(3));
    let th = payload["threshold"].as_f64().unwrap();
    assert!((th - 0.8185).abs() < 2e-3);
}

#[test]
fn version_names_format_versions() {
    let out = bin().arg("--version").output().unwrap();
    assert!(out.status.success());
    let text = stdout_str(&out);
    assert!(text.contains("table format v1"), "{text}");
}
