use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenemux(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenemux"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = scenemux(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn defaults_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Dataset, encoder, repository, pools and decision under `dir`.
fn offline(dir: &Path) {
    ok(&["generate", "--out", "ds.jsonl"], dir);
    ok(&["profile", "--dataset", "ds.jsonl", "--out", "prof"], dir);
    ok(
        &[
            "sample",
            "--dataset",
            "ds.jsonl",
            "--repository",
            "prof/repository.json",
            "--out",
            "pools.json",
        ],
        dir,
    );
    ok(
        &[
            "train-decision",
            "--dataset",
            "ds.jsonl",
            "--encoder",
            "prof/encoder.json",
            "--repository",
            "prof/repository.json",
            "--pools",
            "pools.json",
            "--out",
            "decision.json",
        ],
        dir,
    );
}

const ANOLE_INPUTS: [&str; 8] = [
    "--dataset",
    "ds.jsonl",
    "--encoder",
    "prof/encoder.json",
    "--repository",
    "prof/repository.json",
    "--decision",
    "decision.json",
];

#[test]
fn checked_in_defaults_match_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let builtin = ok(&["config"], dir.path());
    let from_file = ok(&["config", "--config", defaults_file().to_str().unwrap()], dir.path());
    assert_eq!(builtin, from_file);
    let text = std::fs::read_to_string(defaults_file()).unwrap();
    let body: String = text
        .lines()
        .skip_while(|l| l.starts_with('#') || l.is_empty())
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(body, builtin);
}

#[test]
fn generate_writes_header_matching_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "generate",
            "--set",
            "generator.frames_per_clip=40",
            "--out",
            "d/ds.jsonl",
        ],
        dir.path(),
    );
    let text = std::fs::read_to_string(dir.path().join("d/ds.jsonl")).unwrap();
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["schema"]["feature_dim"], 8);
    assert_eq!(header["schema"]["num_classes"], 4);
    assert_eq!(header["schema"]["attr_cardinalities"], serde_json::json!([3, 2]));
    assert_eq!(text.lines().count(), 1 + 6 * 3 * 40);
}

#[test]
fn seed_changes_dataset_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        &[
            "generate",
            "--seed",
            "1",
            "--set",
            "generator.frames_per_clip=40",
            "--out",
            "a.jsonl",
        ],
        p,
    );
    ok(
        &[
            "generate",
            "--seed",
            "1",
            "--set",
            "generator.frames_per_clip=40",
            "--out",
            "b.jsonl",
        ],
        p,
    );
    ok(
        &[
            "generate",
            "--seed",
            "2",
            "--set",
            "generator.frames_per_clip=40",
            "--out",
            "c.jsonl",
        ],
        p,
    );
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(scenemux(&["generate"], dir.path()).status.code(), Some(2));
    assert_eq!(scenemux(&["bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(
        scenemux(&["simulate", "--dataset", "x", "--out", "y"], dir.path())
            .status
            .code(),
        Some(2),
        "anole needs its artifacts"
    );
    assert_eq!(
        scenemux(
            &["simulate", "--dataset", "x", "--baseline", "big", "--out", "y"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = scenemux(&["generate", "--set", "profiling.width=3", "--out", "a.jsonl"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key profiling.width"));

    std::fs::write(p.join("bad.conf"), "[generator]\nframes_per_clip = 0\n").unwrap();
    let out = scenemux(&["generate", "--config", "bad.conf", "--out", "a.jsonl"], p);
    assert_eq!(out.status.code(), Some(1));

    let out = scenemux(&["profile", "--dataset", "missing.jsonl", "--out", "prof"], p);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn profile_builds_n_models_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["generate", "--out", "ds.jsonl"], p);
    let stdout = ok(&["profile", "--dataset", "ds.jsonl", "--out", "a"], p);
    assert!(stdout.contains("accepted"));
    ok(&["profile", "--dataset", "ds.jsonl", "--out", "b"], p);
    let repo = json(&p.join("a/repository.json"));
    assert_eq!(repo["models"].as_array().unwrap().len(), 8);
    for m in repo["models"].as_array().unwrap() {
        assert!(m["validation_f1"].as_f64().unwrap() > 0.5);
    }
    assert_eq!(
        std::fs::read(p.join("a/repository.json")).unwrap(),
        std::fs::read(p.join("b/repository.json")).unwrap()
    );
}

#[test]
fn unattainable_threshold_reports_accepted_count() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        &[
            "generate",
            "--set",
            "generator.frames_per_clip=100",
            "--out",
            "ds.jsonl",
        ],
        p,
    );
    let out = scenemux(
        &[
            "profile",
            "--dataset",
            "ds.jsonl",
            "--set",
            "profiling.delta=1.0",
            "--set",
            "profiling.k_max=4",
            "--out",
            "prof",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("only 0 of 8"), "{err}");
}

#[test]
fn staged_pipeline_simulates_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    offline(p);

    let mut args = vec!["simulate"];
    args.extend(ANOLE_INPUTS);
    args.extend(["--capacity-sweep", "1..8", "--out", "sim"]);
    ok(&args, p);
    ok(
        &["simulate", "--dataset", "ds.jsonl", "--baseline", "ssm", "--out", "sim"],
        p,
    );

    let anole = json(&p.join("sim/summary-anole.json"));
    let ssm = json(&p.join("sim/summary-ssm.json"));
    for s in [&anole, &ssm] {
        for key in [
            "miss_rate",
            "mean_window_f1",
            "duration_quartiles",
            "top1_histogram",
            "top5_coverage",
        ] {
            assert!(!s["summary"][key].is_null(), "missing {key}");
        }
    }
    assert_eq!(anole["inputs"]["trace"], ssm["inputs"]["trace"], "same trace");

    let sweep = json(&p.join("sim/sweep-anole.json"));
    let rows = sweep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    let miss: Vec<f64> = rows.iter().map(|r| r["miss_rate"].as_f64().unwrap()).collect();
    assert!(miss.windows(2).all(|w| w[1] <= w[0]), "{miss:?}");

    let csv = std::fs::read_to_string(p.join("sim/metrics-anole.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "frame,window_id,served_model,top1_model,miss,correct"
    );
    assert_eq!(csv.lines().count(), 501);

    let report = ok(&["report", "sim", "--out", "report.json"], p);
    assert!(report.contains("non-increasing"));
    let agg = json(&p.join("report.json"));
    assert_eq!(agg["methods"].as_array().unwrap().len(), 2);
}

#[test]
fn mismatched_artifacts_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    offline(p);
    ok(&["generate", "--seed", "7", "--out", "other.jsonl"], p);

    let out = scenemux(
        &[
            "sample",
            "--dataset",
            "other.jsonl",
            "--repository",
            "prof/repository.json",
            "--out",
            "x.json",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));

    let mut args = vec!["simulate"];
    args.extend(ANOLE_INPUTS);
    args[2] = "other.jsonl";
    args.extend(["--out", "sim"]);
    assert_eq!(scenemux(&args, p).status.code(), Some(1));

    // Editing the encoder breaks the repository's and decision's references.
    let enc = p.join("prof/encoder.json");
    let text = std::fs::read_to_string(&enc)
        .unwrap()
        .replacen("\"hidden_dim\": 16", "\"hidden_dim\": 16 ", 1);
    std::fs::write(&enc, text).unwrap();
    let mut args = vec!["simulate"];
    args.extend(ANOLE_INPUTS);
    args.extend(["--out", "sim"]);
    let out = scenemux(&args, p);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));
}

#[test]
fn run_is_byte_identical_and_report_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let small = [
        "--set",
        "generator.frames_per_clip=250",
        "--set",
        "trace.segment_len=50",
    ];
    let mut a = vec!["run", "--seeds", "3..4", "--out", "a"];
    a.extend(small);
    let mut b = vec!["run", "--seeds", "3..4", "--out", "b"];
    b.extend(small);
    ok(&a, p);
    ok(&b, p);
    for seed in ["seed-3", "seed-4"] {
        let manifest = json(&p.join("a").join(seed).join("manifest.json"));
        for file in manifest.as_object().unwrap().keys() {
            assert_eq!(
                std::fs::read(p.join("a").join(seed).join(file)).unwrap(),
                std::fs::read(p.join("b").join(seed).join(file)).unwrap(),
                "{seed}/{file}"
            );
        }
    }

    // Aggregation arithmetic, recomputed from the per-seed summaries.
    let agg = json(&p.join("a/report.json"));
    for m in agg["methods"].as_array().unwrap() {
        let name = m["method"].as_str().unwrap();
        let xs: Vec<f64> = ["seed-3", "seed-4"]
            .iter()
            .map(|s| {
                json(&p.join("a").join(s).join(format!("summary-{name}.json")))["summary"]["mean_window_f1"]
                    .as_f64()
                    .unwrap()
            })
            .collect();
        let mean = (xs[0] + xs[1]) / 2.0;
        let std = ((xs[0] - mean).powi(2) + (xs[1] - mean).powi(2)).sqrt() / 2f64.sqrt();
        assert!((m["mean_window_f1"]["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
        assert!((m["mean_window_f1"]["std"].as_f64().unwrap() - std).abs() < 1e-12);
        assert_eq!(m["runs"], 2);
    }
}
