use std::process::{Command, Output};

fn qes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qes"))
        .args(args)
        .output()
        .expect("run qes")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8")
}

/// Rows of a CSV body as maps from header to field.
fn rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().expect("header").clone();
    reader
        .records()
        .map(|r| {
            let r = r.expect("record");
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().expect("number")
}

#[test]
fn exact_sextic_n2_at_b0() {
    let out = qes(&["exact", "sextic", "--n", "2", "--s", "0", "--b", "0"]);
    assert!(out.status.success());
    let rows = rows(&stdout(&out));
    assert_eq!(rows.len(), 3);
    let energies: Vec<f64> = rows.iter().map(|r| num(&r["energy"])).collect();
    for (e, want) in energies.iter().zip([-8.0, 0.0, 8.0]) {
        assert!((e - want).abs() < 1e-12, "{energies:?}");
    }
    assert!(rows.iter().all(|r| num(&r["a"]) == 11.0));
    let nodes: Vec<&str> = rows.iter().map(|r| r["nodes"].as_str()).collect();
    assert_eq!(nodes, ["0", "1", "2"]);
}

#[test]
fn exact_coulomb_n0() {
    let out = qes(&["exact", "coulomb", "--n", "0", "--gamma", "1", "--b", "1"]);
    assert!(out.status.success());
    let rows = rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(num(&rows[0]["energy"]), 4.75);
    assert_eq!(num(&rows[0]["a"]), -2.0);
}

#[test]
fn exact_sextic_odd_n0() {
    let out = qes(&["exact", "sextic", "--n", "0", "--s", "1", "--b", "2"]);
    assert!(out.status.success());
    let rows = rows(&stdout(&out));
    assert_eq!(num(&rows[0]["a"]), 4.0);
    assert!((num(&rows[0]["energy"]) + 3.0).abs() < 1e-12);
}

#[test]
fn invalid_flags_exit_with_usage_code() {
    assert_eq!(qes(&["exact", "sextic", "--n", "1", "--s", "3", "--b", "0"]).status.code(), Some(2));
    assert_eq!(qes(&["sweep", "sextic", "--a", "0", "--b", "3:0:0.1"]).status.code(), Some(2));
    assert_eq!(qes(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn coulomb_sweep_truncation_rows() {
    let out = qes(&["sweep", "coulomb", "--gamma", "1", "--b", "1", "--a", "-10:10:0.1", "--levels", "2"]);
    assert!(out.status.success());
    let rows = rows(&stdout(&out));
    let blue: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r["provenance"] == "truncation")
        .map(|r| (num(&r["value"]), num(&r["energy"])))
        .collect();
    let root = 33f64.sqrt();
    for (a, e) in [(-2.0, 4.75), (-(5.0 + root) / 2.0, 6.75), (-(5.0 - root) / 2.0, 6.75)] {
        assert!(
            blue.iter().any(|&(x, y)| (x - a).abs() < 1e-12 && (y - e).abs() < 1e-12),
            "missing ({a}, {e}) in {blue:?}"
        );
    }
}

#[test]
fn sextic_sweep_has_no_blue_points_inside_gap() {
    let out = qes(&["sweep", "sextic", "--a", "0", "--b", "-6:6:0.5", "--levels", "4"]);
    assert!(out.status.success());
    let rows = rows(&stdout(&out));
    let blue: Vec<f64> = rows
        .iter()
        .filter(|r| r["provenance"] == "truncation")
        .map(|r| num(&r["value"]))
        .collect();
    assert!(!blue.is_empty());
    assert!(blue.iter().all(|b| b * b >= 12.0 - 1e-12), "{blue:?}");
    assert!(blue.iter().any(|b| (b - 12f64.sqrt()).abs() < 1e-12));
    assert!(blue.iter().any(|b| (b + 12f64.sqrt()).abs() < 1e-12));
}

#[test]
fn sweep_output_is_deterministic() {
    let args = ["sweep", "sextic", "--b", "0", "--a", "0:6:0.5", "--levels", "3"];
    let first = qes(&args);
    let second = qes(&[&args[..], &["--jobs", "1"]].concat());
    assert!(first.status.success() && second.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn threshold_reports_json() {
    let out = qes(&["threshold", "sextic", "--sweep", "a", "--b", "0", "--nu", "0"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("json");
    assert!((v["root"].as_f64().unwrap() - 3.0).abs() < 1e-7);
    assert!(v["residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn moments_dump() {
    let out = qes(&["moments", "sextic", "--b", "0", "--max", "8"]);
    assert!(out.status.success());
    let rows = rows(&stdout(&out));
    assert_eq!(rows.len(), 5);
    let mu0 = num(&rows[0]["value"]);
    assert!((mu0 - 2.1558005).abs() < 1e-6);
    assert!(rows.iter().all(|r| r["status"] == "ok"));
}

#[test]
fn check_symmetry_passes() {
    let out = qes(&["check", "symmetry"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("json");
    assert!(v.as_array().unwrap().iter().all(|s| s["passed"] == true));
}
