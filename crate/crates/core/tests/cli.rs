mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use metric_extensor::extensor::ExtensionFile;
use metric_extensor::instance::{Instance, InstanceFile};
use metric_extensor::metric::{sup_distance, DistMatrix, MetricMode};
use metric_extensor::verify::{Comparison, Status, VerificationReport};
use metric_extensor::wd::{check_wd, WdCollection};
use tempfile::TempDir;

fn isoext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoext"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = isoext(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn demo_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_instance.json")
}

#[test]
fn gen_is_deterministic_and_valid() {
    let a = ok(&["gen", "--n", "10", "--a", "4", "--seed", "7"]);
    let b = ok(&["gen", "--n", "10", "--a", "4", "--seed", "7"]);
    assert_eq!(a, b);
    let file: InstanceFile = serde_json::from_str(&a).unwrap();
    assert!(file.w.validate(MetricMode::Metric).is_valid());
    assert_ne!(a, ok(&["gen", "--n", "10", "--a", "4", "--seed", "8"]));
    assert_eq!(
        isoext(&["gen", "--n", "3", "--a", "4"]).status.code(),
        Some(2)
    );
}

#[test]
fn whole_space_extension_is_the_identity() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "i.json",
        &ok(&["gen", "--n", "5", "--a", "5", "--seed", "1"]),
    );
    for metric in ["m", "perturbed", "random"] {
        let out: ExtensionFile =
            serde_json::from_str(&ok(&["extend", s(&inst), "--metric", metric])).unwrap();
        let loaded = Instance::load(&inst).unwrap();
        assert_eq!(&out.matrix, loaded.metric(metric).unwrap());
    }
}

#[test]
fn extend_modes_agree_within_the_bound() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "i.json",
        &ok(&["gen", "--n", "12", "--a", "4", "--seed", "3"]),
    );
    let exact: ExtensionFile =
        serde_json::from_str(&ok(&["extend", s(&inst), "--metric", "random"])).unwrap();
    assert_eq!(exact.error_bound, 0.0);
    let level = (exact.s_star + 20).to_string();
    let out = ok(&[
        "extend",
        s(&inst),
        "--metric",
        "random",
        "--mode",
        "truncated",
        "--S",
        &level,
    ]);
    let truncated: ExtensionFile = serde_json::from_str(&out).unwrap();
    assert!(truncated.error_bound > 0.0);
    assert!(sup_distance(&exact.matrix, &truncated.matrix).unwrap() <= truncated.error_bound);

    let out = ok(&[
        "extend",
        s(&inst),
        "--metric",
        "m",
        "--mode",
        "truncated",
        "--tol",
        "1e-6",
    ]);
    let by_tol: ExtensionFile = serde_json::from_str(&out).unwrap();
    assert!(by_tol.error_bound <= 1e-6);
}

#[test]
fn extend_usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "i.json", &ok(&["gen", "--n", "6", "--a", "2"]));
    let cases: [&[&str]; 5] = [
        &["extend", s(&inst), "--metric", "missing"],
        &["extend", s(&inst), "--metric", "m", "--mode", "truncated"],
        &["extend", s(&inst), "--metric", "m", "--S", "3"],
        &[
            "extend",
            s(&inst),
            "--metric",
            "m",
            "--mode",
            "truncated",
            "--S",
            "65",
        ],
        &[
            "extend",
            s(&inst),
            "--metric",
            "m",
            "--mode",
            "truncated",
            "--tol",
            "1e-300",
        ],
    ];
    for args in cases {
        let out = isoext(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let text = ok(&["gen", "--n", "9", "--a", "3", "--seed", "5"]);
    let healthy = write(&dir, "ok.json", &text);
    let report_path = dir.path().join("report.json");
    ok(&["verify", s(&healthy), "--out", s(&report_path)]);
    let report: VerificationReport =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report.checks.iter().all(|c| c.status != Status::Fail));

    let corrupted = write(&dir, "bad.json", &text[..text.len() / 2]);
    assert_eq!(isoext(&["verify", s(&corrupted)]).status.code(), Some(2));

    let mut file: InstanceFile = serde_json::from_str(&text).unwrap();
    let broken = DistMatrix::from_rows(&[
        vec![0.0, 1.0, 3.0],
        vec![1.0, 0.0, 1.0],
        vec![3.0, 1.0, 0.0],
    ])
    .unwrap();
    file.metrics.insert("broken".into(), broken);
    let planted = write(&dir, "planted.json", &file.to_json());
    let out = isoext(&["verify", s(&planted)]);
    assert_eq!(out.status.code(), Some(1));
    let report: VerificationReport = serde_json::from_slice(&out.stdout).unwrap();
    let failed: Vec<_> = report.failures().map(|c| c.id.as_str()).collect();
    assert_eq!(failed, ["input.family_metric"]);
}

#[test]
fn compare_reports_both_defects() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("cmp.json");
    let text = ok(&["compare", s(&demo_path()), "d", "d3", "--out", s(&json)]);
    assert!(text.contains("baseline"));
    let cmp: Comparison = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(cmp.extensor_defect <= 1e-9);
    assert!(cmp.baseline_defect > 0.0);

    ok(&["compare", s(&demo_path()), "d", "d", "--out", s(&json)]);
    let same: Comparison = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!((same.extensor_defect, same.baseline_defect), (0.0, 0.0));
}

#[test]
fn wd_dumps_revalidate() {
    let dir = TempDir::new().unwrap();
    let inst_path = write(
        &dir,
        "i.json",
        &ok(&["gen", "--n", "14", "--a", "3", "--seed", "2"]),
    );
    let inst = Instance::load(&inst_path).unwrap();
    for k in ["0", "1", "3"] {
        let dump: WdCollection =
            serde_json::from_str(&ok(&["wd", s(&inst_path), "--k", k])).unwrap();
        assert!(!dump.cells.is_empty());
        assert!(check_wd(&dump, &inst.pair).is_clean());
    }
}

#[test]
fn wd_small_cases() {
    let dir = TempDir::new().unwrap();
    let all_in = write(&dir, "all.json", &ok(&["gen", "--n", "4", "--a", "4"]));
    let dump: serde_json::Value = serde_json::from_str(&ok(&["wd", s(&all_in)])).unwrap();
    assert_eq!(dump["cells"].as_array().unwrap().len(), 0);

    let single = write(
        &dir,
        "one.json",
        r#"{"points": ["a", "x"], "A": ["a"], "w": [[0, 1.5], [1.5, 0]], "metrics": {}}"#,
    );
    let dump: serde_json::Value =
        serde_json::from_str(&ok(&["wd", s(&single), "--k", "0"])).unwrap();
    let cells = dump["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["members"], serde_json::json!([1]));
    assert_eq!(cells[0]["anchor"], 0);
    assert_eq!(dump["check"]["violations"], serde_json::json!([]));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "i.json",
        &ok(&["gen", "--n", "11", "--a", "4", "--seed", "9"]),
    );
    let runs: [&[&str]; 4] = [
        &["extend", s(&inst), "--metric", "perturbed"],
        &[
            "extend",
            s(&inst),
            "--metric",
            "random",
            "--mode",
            "truncated",
            "--tol",
            "1e-8",
        ],
        &["verify", s(&inst), "--seed", "4"],
        &["compare", s(&inst), "m", "random"],
    ];
    for args in runs {
        assert_eq!(ok(args), ok(args), "{args:?}");
    }
}
