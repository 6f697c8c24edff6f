//! The `protoeval` binary driven as a subprocess.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use protoeval::interchange::write_bundle;
use protoeval::pipeline::{MetricReport, PerturbationIndex};
use protoeval::synthetic::{planted_bundle, FixtureSpec};

fn protoeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protoeval"))
        .args(args)
        .env_remove("PROTOEVAL_PARALLELISM")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a demonstration bundle and returns its manifest path.
fn synth(dir: &Path, samples: usize, mode: &str) -> PathBuf {
    let out = protoeval(&[
        "synth",
        "--out",
        s(dir),
        "--samples",
        &samples.to_string(),
        "--mode",
        mode,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    PathBuf::from(stdout(&out).trim())
}

#[test]
fn synthesized_bundle_validates() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["synthetic", "regenerate", "bundle"] {
        let manifest = synth(&dir.path().join(mode), 4, mode);
        let out = protoeval(&["validate", s(&manifest)]);
        assert_eq!(code(&out), 0, "{mode}: {}", stderr(&out));
        assert!(stdout(&out).starts_with("ok:"), "{}", stdout(&out));
    }
}

#[test]
fn planted_violation_fails_validation_and_names_the_sample() {
    let mut bundle = planted_bundle(&FixtureSpec {
        samples: 3,
        ..Default::default()
    })
    .unwrap();
    bundle.samples[2].similarity_scores[0] += 0.1;
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_bundle(&bundle, dir.path()).unwrap();
    let out = protoeval(&["validate", s(&manifest)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("planted-002"), "{}", stderr(&out));
}

#[test]
fn exit_codes_separate_usage_io_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(code(&protoeval(&["validate", s(&missing)])), 3);
    assert_eq!(code(&protoeval(&["frobnicate"])), 2);

    let manifest = synth(dir.path(), 3, "synthetic");
    let out = dir.path().join("r.json");
    let unknown = protoeval(&["metrics", "nosuch", s(&manifest), "--out", s(&out)]);
    assert_eq!(code(&unknown), 2, "{}", stderr(&unknown));
    let bad_format = protoeval(&[
        "metrics",
        "all",
        s(&manifest),
        "--out",
        s(&out),
        "--format",
        "xml",
    ]);
    assert_eq!(code(&bad_format), 2, "{}", stderr(&bad_format));
}

#[test]
fn metrics_reports_in_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("bundle"), 4, "regenerate");
    let json = dir.path().join("all.json");
    let out = protoeval(&["metrics", "all", s(&manifest), "--out", s(&json)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = MetricReport::read(&json).unwrap();
    report.check_aggregates(1e-12).unwrap();
    assert_eq!(report.metrics["performance.accuracy"].mean, Some(1.0));

    let csv = dir.path().join("compact.csv");
    let out = protoeval(&[
        "metrics",
        "compactness",
        s(&manifest),
        "--out",
        s(&csv),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let compact: usize = report
        .metrics
        .iter()
        .filter(|(k, _)| k.starts_with("compactness."))
        .map(|(_, e)| e.entity_count())
        .sum();
    assert_eq!(text.lines().count(), compact + 1);
}

#[test]
fn parallelism_from_the_environment_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("bundle"), 5, "synthetic");
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_protoeval"))
            .args(["metrics", "all", s(&manifest), "--out", s(&path)])
            .env("PROTOEVAL_PARALLELISM", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        MetricReport::read(&path).unwrap().without_timestamps()
    };
    assert_eq!(run("1", "one.json"), run("4", "four.json"));
}

#[test]
fn report_converts_combines_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("bundle"), 4, "synthetic");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = protoeval(&["metrics", "all", s(&manifest), "--out", s(path)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }

    let csv = dir.path().join("a.csv");
    let out = protoeval(&["report", s(&a), "--format", "csv", "--out", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(fs::read_to_string(&csv).unwrap().lines().count() > 1);

    let merged = dir.path().join("merged.json");
    let two = protoeval(&[
        "report",
        s(&a),
        s(&b),
        "--format",
        "json",
        "--out",
        s(&merged),
    ]);
    assert_eq!(code(&two), 2, "several reports need --combine");
    let out = protoeval(&[
        "report",
        s(&a),
        s(&b),
        "--format",
        "json",
        "--out",
        s(&merged),
        "--combine",
        "folds",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let combined = MetricReport::read(&merged).unwrap();
    assert_eq!(
        combined.metadata.runs,
        vec!["a".to_string(), "b".to_string()]
    );

    let figures = dir.path().join("figures");
    let out = protoeval(&[
        "report",
        s(&a),
        s(&b),
        "--format",
        "svg",
        "--out",
        s(&figures),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let written: Vec<_> = stdout(&out).lines().map(PathBuf::from).collect();
    assert!(!written.is_empty());
    for path in written {
        let svg = fs::read_to_string(&path).unwrap();
        assert_eq!(
            svg.matches("class=\"series\"").count(),
            2,
            "{}",
            path.display()
        );
    }
}

#[test]
fn perturb_writes_an_index_of_planned_images() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("bundle"), 3, "regenerate");
    let target = dir.path().join("perturbed");
    let out = protoeval(&["perturb", s(&manifest), "--out", s(&target)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let index_path = PathBuf::from(stdout(&out).trim());
    let index: PerturbationIndex =
        serde_json::from_str(&fs::read_to_string(index_path).unwrap()).unwrap();
    assert!(!index.items.is_empty());
    for item in &index.items {
        assert!(target.join(&item.image).exists(), "{}", item.image);
    }
}

#[test]
fn stratified_split_from_a_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let label_path = dir.path().join("labels.json");
    fs::write(&label_path, serde_json::to_string(&labels).unwrap()).unwrap();
    let out_path = dir.path().join("split.json");
    let out = protoeval(&[
        "split",
        "stratified",
        "--labels",
        s(&label_path),
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let split: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(split.is_object());

    // both label sources at once is a usage error
    let both = protoeval(&[
        "split",
        "stratified",
        "--labels",
        s(&label_path),
        "--manifest",
        s(&label_path),
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&both), 2);
}
