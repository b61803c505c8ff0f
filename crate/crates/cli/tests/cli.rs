use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn halfstrip(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_halfstrip"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn classify_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", r#"{"family":"correlated_rw","q":0.7,"c_plus":1.0,"c_minus":1.0}"#);
    let (code, out, err) = halfstrip(dir.path(), &["classify", "--model", &model]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["classification"]["verdict"], "Transient");
    assert!(err.contains("verdict"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"family":"correlated_rw","q":1.2,"c":1.0}"#);
    let (code, _, err) = halfstrip(dir.path(), &["classify", "--model", &bad]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("model.q"));

    let empty = write(dir.path(), "empty.json", "");
    assert_eq!(halfstrip(dir.path(), &["run", &empty]).0, 2);

    // invalid lattice: the SSRW does not live on Z + 1/2
    let law = write(dir.path(), "law.json", r#"{"family":"ssrw","d":1}"#);
    let (code, _, err) = halfstrip(
        dir.path(),
        &["--seed", "1", "com", "llt", "--law", &law, "--n", "5", "--samples", "100000", "--H", "1", "--b", "0.5"],
    );
    assert_eq!(code, 3, "{err}");
}

#[test]
fn simulate_csv_has_provenance_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", r#"{"family":"correlated_rw","q":0.7,"c":-1.0}"#);
    let args = |out: &'static str| {
        vec![
            "--seed", "9", "simulate", "--model", model.as_str(), "--paths", "40", "--steps", "5000", "--out", out,
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    for out in ["a.csv", "b.csv"] {
        let a = args(out);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        assert_eq!(halfstrip(dir.path(), &refs).0, 0);
    }
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert!(lines.next().unwrap().starts_with("# seed=9, scenario_hash="));
    assert!(lines.next().unwrap().starts_with("path_id,final_x,final_line,tau,max_x,occ_"));
}

#[test]
fn llt_lattice_and_stable_commands() {
    let dir = tempfile::tempdir().unwrap();
    let law = write(dir.path(), "lazy.json", r#"{"family":"lazy_ssrw","d":1}"#);
    let (code, _, err) = halfstrip(
        dir.path(),
        &["--seed", "3", "com", "llt", "--law", &law, "--n", "20", "--samples", "100000", "--target", "com", "--out", "llt.csv"],
    );
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("llt.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("discrepancy"));

    let ssrw = write(dir.path(), "ssrw.json", r#"{"family":"ssrw","d":2}"#);
    let (code, out, _) = halfstrip(dir.path(), &["lattice", "verify", "--law", &ssrw, "--H", "1,0;0,1", "--grid", "51"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["minimality"]["passed"], false);
    let (_, out, _) = halfstrip(dir.path(), &["lattice", "verify", "--law", &ssrw, "--grid", "51"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["minimality"]["passed"], true);

    let (code, out, _) = halfstrip(dir.path(), &["com", "stable", "--alpha", "0.5", "--points", "11"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["g0"].as_f64().unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn run_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "sc.json",
        r#"{"task":"recur","seed":4,"law":{"family":"ssrw"},"params":{"n_max":10000,"runs":3}}"#,
    );
    let (code, out, err) = halfstrip(dir.path(), &["run", &sc]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["checkpoints"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("run.json").exists());
}
