use std::path::Path;
use std::process::{Command, Output};

use dimlift::cli::{parse_matrix, CSV_HEADER};

fn dimlift(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimlift"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run dimlift")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Data lines of a dimlift CSV, split on commas.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    lines.next().expect("column line");
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn compat_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dimlift(dir.path(), &["compat", "--model", "norm-deepset", "--seq", "dup-set"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("PASS"));
    assert!(dir.path().join("dimlift-out/compat.json").exists());

    let bad = dimlift(dir.path(), &["compat", "--model", "ign2-norm", "--seq", "dup-graph"]);
    assert_eq!(bad.status.code(), Some(1));
    let out = stdout(&bad);
    assert!(out.starts_with("FAIL"), "{out}");
    assert!(out.contains("witness") && out.contains("input="), "{out}");
}

#[test]
fn malformed_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"model": {"family": "norm-deepset", "in_dim": "one"}}"#);
    let o = dimlift(dir.path(), &["compat", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.in_dim"));

    write(dir.path(), "typo.json", r#"{"sedd": 1}"#);
    assert_eq!(dimlift(dir.path(), &["compat", "--config", "typo.json"]).status.code(), Some(2));
    write(dir.path(), "trunc.json", r#"{"seed": "#);
    assert_eq!(dimlift(dir.path(), &["compat", "--config", "trunc.json"]).status.code(), Some(2));
}

#[test]
fn metric_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "a.txt", "2 1\n0\n1\n");
    write(d, "b.txt", "2 1\n1\n2\n");
    let o = dimlift(d, &["metric", "w1d", "a.txt", "b.txt", "--p", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1");

    write(d, "cloud.txt", "4 2\n0 0\n1 0\n0 2\n3 1\n");
    for kind in ["w1d", "wp", "hausdorff", "gw-tlb", "sym-dist"] {
        let o = dimlift(d, &["metric", kind, "cloud.txt", "cloud.txt"]);
        assert_eq!(o.status.code(), Some(0), "{kind}");
        assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.0, "{kind}");
    }
    write(d, "g.txt", "3 3\n0 1 0.5\n1 0 0\n0.5 0 1\n");
    for kind in ["cut", "op2"] {
        let o = dimlift(d, &["metric", kind, "g.txt", "g.txt"]);
        let vals: Vec<f64> = stdout(&o).split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert!(vals.iter().all(|&v| v == 0.0), "{kind}: {vals:?}");
    }

    // For the all-ones graph the cut norm and the operator norm are both 1;
    // the lower end of the bracket is op²/8.
    write(d, "ones.txt", "3 3\n1 1 1\n1 1 1\n1 1 1\n");
    let o = dimlift(d, &["metric", "cut", "ones.txt"]);
    let vals: Vec<f64> = stdout(&o).split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(vals.len(), 3);
    assert!((vals[0] - 0.125).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12 && (vals[2] - 1.0).abs() < 1e-12);
}

#[test]
fn metric_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "junk.txt", "2 1\n0\nx\n");
    write(d, "a.txt", "1 1\n0\n");
    assert_eq!(dimlift(d, &["metric", "w1d", "junk.txt", "a.txt"]).status.code(), Some(2));
    assert_eq!(dimlift(d, &["metric", "w1d", "missing.txt", "a.txt"]).status.code(), Some(2));

    let big = |n: usize| format!("{n} 2\n{}", "0 0\n".repeat(n));
    write(d, "big.txt", &big(301));
    assert_eq!(dimlift(d, &["metric", "gw-tlb", "big.txt", "big.txt"]).status.code(), Some(3));
}

#[test]
fn transfer_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gauss = r#""sampler": {"limit": {"kind": "scalar", "dist": {"type": "gaussian", "mean": 0, "std": 1}}, "scheme": "iid-empirical", "seed": 1}"#;
    write(
        d,
        "nds.json",
        &format!(
            r#"{{"model": {{"family": "norm-deepset", "in_dim": 1}}, {gauss},
                "transfer": {{"sizes": [16, 32, 64, 128, 256, 512, 1024, 2048, 4096], "trials": 100, "mean_field_nodes": 100000}}}}"#
        ),
    );
    let o = dimlift(d, &["transfer", "--config", "nds.json", "--out", "nds"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let slope = json(&d.join("nds/transfer.json"))["fit"]["slope"].as_f64().unwrap();
    assert!((-0.65..=-0.35).contains(&slope), "slope {slope}");
    assert_eq!(csv_rows(&d.join("nds/transfer.csv")).len(), 9 * 100);

    write(
        d,
        "ds.json",
        &format!(
            r#"{{"model": {{"family": "deep-set", "in_dim": 1}}, {gauss},
                "transfer": {{"sizes": [64, 256, 1024, 4096], "trials": 50}}}}"#
        ),
    );
    assert_eq!(dimlift(d, &["transfer", "--config", "ds.json", "--out", "ds"]).status.code(), Some(0));
    assert_eq!(json(&d.join("ds/transfer.json"))["diverged"], true);

    write(
        d,
        "ggnn.json",
        r#"{"model": {"family": "ggnn", "in_dim": 1},
            "sampler": {"limit": {"kind": "graphon", "w": {"type": "constant", "value": 0.5}}, "scheme": "uniform-grid"},
            "transfer": {"sizes": [4, 8, 16, 32, 64], "trials": 2,
                         "reference": {"kind": "embedded", "input": {"kind": "graph_signal", "adj": {"rows": 1, "cols": 1, "data": [0.5]}, "x": {"rows": 1, "cols": 1, "data": [1.0]}}, "seq": "dup-graph"}}}"#,
    );
    let o = dimlift(d, &["transfer", "--config", "ggnn.json", "--out", "ggnn"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for row in csv_rows(&d.join("ggnn/transfer.csv")) {
        assert!(row[3].parse::<f64>().unwrap() <= 1e-9, "{row:?}");
    }
}

#[test]
fn sizegen_shape_round_trip_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "tri.json",
        r#"{"seed": 1, "model": {"family": "cggnn", "in_dim": 1, "hidden": 4, "depth": 2},
            "task": {"task": {"kind": "triangle-density", "gen": "dense-uniform"}, "samples": 20, "n_train": 6, "n_test": [6, 12, 18], "eval_samples": 5, "seed": 3},
            "train": {"epochs": 2},
            "sizegen": {"cache_dir": "cache"}}"#,
    );
    let o = dimlift(d, &["sizegen", "--config", "tri.json", "--out", "first"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&d.join("first/sizegen.csv"));
    assert_eq!(rows.len(), 10 * 3);
    assert!(rows.iter().all(|r| r[0] == "triangle-density-dense-uniform" && r[1] == "cggnn"));
    for r in &rows {
        let (mse, ratio): (f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
        let base: f64 = rows.iter().find(|b| b[3] == r[3] && b[2] == "6").unwrap()[4].parse().unwrap();
        assert_eq!(ratio, mse / base);
    }
    assert!(d.join("first/params/run9.dlps").exists());

    let o = dimlift(d, &["sizegen", "--config", "tri.json", "--out", "second"]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["sizegen.csv", "sizegen.json", "curves.json", "params/run0.dlps"] {
        assert_eq!(std::fs::read(d.join("first").join(f)).unwrap(), std::fs::read(d.join("second").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn numeric_text_round_trips() {
    let m = parse_matrix("2 2\n0.1 1e-300\n-3.25 123456789.125\n").unwrap();
    let text = dimlift::cli::format_matrix(&m);
    assert_eq!(parse_matrix(&text).unwrap(), m);
}
