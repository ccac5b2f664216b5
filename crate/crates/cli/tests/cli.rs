use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ipp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to run ipp")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ipp(dir, args);
    assert!(
        out.status.success(),
        "ipp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_bbm(dir: &Path, seed: &str, out: &str) {
    ok(
        dir,
        &[
            "simulate", "bbm", "--n", "30", "--eta0", "60", "--seed", seed, "--out", out,
        ],
    );
}

fn fit_args(out: &str) -> Vec<&str> {
    vec![
        "fit",
        "--events",
        "e.csv",
        "--horizon",
        "1",
        "--dim",
        "2",
        "--slices",
        "20",
        "--estimator",
        "histogram",
        "--bins",
        "20",
        "--out",
        out,
    ]
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    small_bbm(dir.path(), "7", "a.csv");
    small_bbm(dir.path(), "7", "b.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_ipp"))
        .current_dir(dir.path())
        .env("IPP_THREADS", "3")
        .args([
            "simulate", "bbm", "--n", "30", "--eta0", "60", "--seed", "7", "--out", "c.csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(a, std::fs::read(dir.path().join("c.csv")).unwrap());
    small_bbm(dir.path(), "8", "d.csv");
    assert_ne!(a, std::fs::read(dir.path().join("d.csv")).unwrap());
    assert!(dir.path().join("a.csv.config.json").exists());
}

#[test]
fn fit_writes_two_column_basis_matching_dense() {
    let dir = tempfile::tempdir().unwrap();
    small_bbm(dir.path(), "3", "e.csv");
    ok(dir.path(), &fit_args("model.json"));
    let mut dense = fit_args("dense.json");
    dense.extend(["--svd", "dense"]);
    ok(dir.path(), &dense);
    let model = read_json(&dir.path().join("model.json"));
    let oracle = read_json(&dir.path().join("dense.json"));
    assert_eq!(model["dim"], 2);
    let rows = |v: &Value| -> Vec<Vec<f64>> {
        v["basis"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                r.as_array()
                    .unwrap()
                    .iter()
                    .map(|x| x.as_f64().unwrap())
                    .collect()
            })
            .collect()
    };
    let (u, w) = (rows(&model), rows(&oracle));
    assert_eq!(u.len(), 30);
    assert!(u.iter().all(|r| r.len() == 2));
    // compare projectors U U^T entrywise
    let mut diff = 0.0f64;
    for i in 0..30 {
        for j in 0..30 {
            let p: f64 = (0..2).map(|c| u[i][c] * u[j][c]).sum();
            let q: f64 = (0..2).map(|c| w[i][c] * w[j][c]).sum();
            diff += (p - q).powi(2);
        }
    }
    assert!(diff.sqrt() < 1e-8, "projector difference {}", diff.sqrt());
}

#[test]
fn lemma1_report_holds() {
    let dir = tempfile::tempdir().unwrap();
    small_bbm(dir.path(), "5", "e.csv");
    ok(dir.path(), &fit_args("model.json"));
    let out = ok(
        dir.path(),
        &[
            "eval",
            "lemma1",
            "--model",
            "model.json",
            "--events",
            "e.csv",
            "--frames",
            "50",
        ],
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let fit = report["rss_fit"].as_f64().unwrap();
    let min = report["rss_random"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(report["rss_random"].as_array().unwrap().len(), 50);
    assert!(fit <= min);
    assert_eq!(report["holds"], true);
}

#[test]
fn rerun_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    small_bbm(dir.path(), "11", "e.csv");
    ok(dir.path(), &fit_args("model.json"));
    ok(
        dir.path(),
        &[
            "project",
            "--model",
            "model.json",
            "--events",
            "e.csv",
            "--count",
            "50",
            "--out",
            "t.csv",
        ],
    );
    for file in ["model.json", "t.csv"] {
        let original = std::fs::read(dir.path().join(file)).unwrap();
        std::fs::remove_file(dir.path().join(file)).unwrap();
        let config = format!("{file}.config.json");
        ok(dir.path(), &["rerun", "--config", &config]);
        assert_eq!(
            std::fs::read(dir.path().join(file)).unwrap(),
            original,
            "{file} differs after rerun"
        );
    }
}

#[test]
fn trajectory_pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    small_bbm(dir.path(), "2", "e.csv");
    ok(dir.path(), &fit_args("model.json"));
    ok(
        dir.path(),
        &[
            "project",
            "--model",
            "model.json",
            "--events",
            "e.csv",
            "--node",
            "1",
            "--node",
            "30",
            "--out",
            "t.csv",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("node,time,x1,x2"));
    // the 20 bin midpoints already lie on the 200-point grid
    assert_eq!(lines.count(), 2 * 200);

    ok(
        dir.path(),
        &[
            "reduce",
            "--input",
            "t.csv",
            "--k",
            "1",
            "--export-init",
            "init.csv",
            "--out",
            "r.csv",
        ],
    );
    let reduced = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(reduced.starts_with("node,time,x1\n"));
    assert!(std::fs::read_to_string(dir.path().join("init.csv"))
        .unwrap()
        .starts_with("node,time,x1,x2\n"));

    ok(
        dir.path(),
        &[
            "snapshot",
            "--model",
            "model.json",
            "--events",
            "e.csv",
            "--at",
            "0.5",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("s.csv"))
            .unwrap()
            .lines()
            .count(),
        31
    );

    for method in ["aligned", "averaged"] {
        let out = format!("{method}.csv");
        ok(
            dir.path(),
            &[
                "baseline",
                method,
                "--events",
                "e.csv",
                "--horizon",
                "1",
                "--windows",
                "10",
                "--dim",
                "2",
                "--count",
                "40",
                "--out",
                &out,
            ],
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join(&out))
                .unwrap()
                .lines()
                .count(),
            1 + 30 * 40
        );
    }
}

#[test]
fn reports_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    small_bbm(dir.path(), "4", "e.csv");
    ok(dir.path(), &fit_args("model.json"));
    let pop = ["--population", "bbm", "--n", "30", "--eta0", "60"];
    let mut theorem = vec![
        "eval",
        "theorem-metric",
        "--model",
        "model.json",
        "--events",
        "e.csv",
        "--quad-points",
        "128",
    ];
    theorem.extend(pop);
    let report: Value = serde_json::from_slice(&ok(dir.path(), &theorem).stdout).unwrap();
    assert!(
        report["error"]["value"].as_f64().unwrap() >= report["error"]["mean"].as_f64().unwrap()
    );

    let mut coherence = vec![
        "eval",
        "coherence",
        "--method",
        "ipp",
        "--model",
        "model.json",
        "--events",
        "e.csv",
    ];
    coherence.extend(pop);
    let report: Value = serde_json::from_slice(&ok(dir.path(), &coherence).stdout).unwrap();
    assert!(report["scores"]["temporal"].as_f64().unwrap() >= 0.0);

    let out = ok(
        dir.path(),
        &["info", "--model", "model.json", "--format", "csv"],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("k,singular_value,ratio,gap\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        ipp(dir.path(), &["fit", "--no-such-flag"]).status.code(),
        Some(2)
    );
    small_bbm(dir.path(), "1", "e.csv");
    let bad = ipp(
        dir.path(),
        &["fit", "--events", "e.csv", "--dim", "30", "--out", "m.json"],
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
    let missing = ipp(
        dir.path(),
        &[
            "fit",
            "--events",
            "missing.csv",
            "--dim",
            "2",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(missing.status.code(), Some(1));
    let kernel = ipp(
        dir.path(),
        &[
            "fit",
            "--events",
            "e.csv",
            "--dim",
            "2",
            "--estimator",
            "box",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(kernel.status.code(), Some(1));
}
