use std::process::{Command, Output};

use serde_json::Value;

fn hjpot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjpot")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Parses a CSV body into header and rows of fields.
fn csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let (header, rows) = csv(text);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn exponential_potential_between_one_and_e() {
    let e = std::f64::consts::E.to_string();
    let out = hjpot(&["potential", "--model", "exponential1d", "--alpha", "0", "--point", &format!("1/{e}")]);
    assert!(out.status.success());
    let s = column(&stdout(&out), "S")[0];
    assert!((s - 0.5).abs() < 1e-8, "{s}");
}

#[test]
fn potential_vanishes_on_the_diagonal() {
    let out = hjpot(&["potential", "--model", "sphere-pullback", "--alpha", "0.7", "--point", "1.1,2.3/1.1,2.3"]);
    assert!(out.status.success());
    assert_eq!(column(&stdout(&out), "S"), [0.0]);
}

#[test]
fn kl_free_particle_potential() {
    let out = hjpot(&["potential", "--model", "kl-free", "--point", "0/0.7"]);
    assert!(out.status.success());
    let s = column(&stdout(&out), "S")[0];
    assert!((s - 0.313752).abs() < 1e-6, "{s}");
    assert!((s - (0.7f64.exp() - 1.7)).abs() < 1e-10, "{s}");
}

#[test]
fn scan_and_potential_agree() {
    let scan = hjpot(&["scan", "--model", "exponential1d", "--alpha", "0.3", "--from", "1", "--grid", "0.5:2:4"]);
    assert!(scan.status.success());
    let text = stdout(&scan);
    let (_, rows) = csv(&text);
    assert_eq!(rows.len(), 4);
    let s = column(&text, "S");
    let single = hjpot(&["potential", "--model", "exponential1d", "--alpha", "0.3", "--point", "1/2"]);
    assert_eq!(column(&stdout(&single), "S")[0], s[3]);
    for (x, got) in [0.5f64, 1.0, 1.5, 2.0].iter().zip(&s) {
        let l = x.ln();
        let want = l * l / 2.0 - 0.1 * l * l * l;
        assert!((got - want).abs() < 1e-8, "{x}: {got} vs {want}");
    }
}

#[test]
fn recover_reports_model_tensors() {
    let out = hjpot(&["recover", "--model", "exponential1d", "--alpha", "0.5", "--point", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!((column(&text, "g_11")[0] - 0.25).abs() < 1e-6);
    assert!((column(&text, "T_111")[0] + 0.25).abs() < 1e-4);
    assert!((column(&text, "gamma_111")[0] + 0.125).abs() < 1e-4);
}

#[test]
fn recover_json_is_a_list_of_reports() {
    let out = hjpot(&["recover", "--model", "euclidean-cubic-r3", "--alpha", "1", "--point", "0,0,0", "--format", "json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let r = &v[0];
    assert_eq!(r["kind"], "principal");
    assert_eq!(r["alpha"], 1.0);
    assert!((r["skewness"][1][1][1].as_f64().unwrap() - 1.0).abs() < 1e-4);
    assert!(r["errors_vs_model"]["metric"].as_f64().unwrap() < 1e-6);
}

#[test]
fn fisher_and_kl_for_the_exponential_family() {
    let out = hjpot(&["fisher", "--model", "exponential1d", "--point", "2"]);
    let text = stdout(&out);
    assert!((column(&text, "g_11")[0] - 0.25).abs() < 1e-12);
    assert!((column(&text, "T_111")[0] + 0.25).abs() < 1e-12);
    let out = hjpot(&["kl", "--model", "exponential1d", "--point", "1/2"]);
    let kl = column(&stdout(&out), "kl")[0];
    assert!((kl - (2.0 - 1.0 - 2f64.ln())).abs() < 1e-12, "{kl}");
}

#[test]
fn verify_passes_on_every_builtin_model() {
    for model in ["exponential1d", "exponential-log", "kl-free", "euclidean-cubic-r3", "sphere-round", "sphere-pullback"] {
        let out = hjpot(&["verify", "--model", model, "--alpha", "0.5", "--format", "json"]);
        let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(out.status.code(), Some(0), "{model}: {v}");
        assert_eq!(v["pass"], true);
        assert!(!v["points"][0]["checks"].as_array().unwrap().is_empty());
    }
}

#[test]
fn verify_exit_code_reports_tolerance_failures() {
    let out = hjpot(&["verify", "--model", "exponential1d", "--alpha", "0.5", "--tol", "1e-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("oracle.closed_form"));
}

#[test]
fn computation_errors_exit_with_two() {
    let out = hjpot(&["recover", "--model", "kl-free", "--point", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = hjpot(&["potential", "--model", "no-such-model", "--point", "1/2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hjpot(&["potential", "--model", "exponential1d", "--point", "1/-2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let args = ["potential", "--model", "sphere-pullback", "--alpha", "0.4", "--grid", "1:1.4:3,2:2.4:2"];
    let a = hjpot(&args);
    let b = hjpot(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(csv(&stdout(&a)).1.len(), 36);
}

#[test]
fn csv_and_json_carry_the_same_values() {
    let base = ["potential", "--model", "exponential-log", "--alpha", "0.2", "--point", "0/0.5", "--point", "0.1/-0.3"];
    let c = stdout(&hjpot(&base));
    let j: Value = serde_json::from_str(&stdout(&hjpot(&[&base[..], &["--format", "json"]].concat()))).unwrap();
    let s = column(&c, "S");
    for (i, row) in j.as_array().unwrap().iter().enumerate() {
        assert_eq!(row["S"].as_f64().unwrap(), s[i]);
        assert_eq!(row["status"], "ok");
    }
}

#[test]
fn config_file_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_path = dir.path().join("s.csv");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"command": "potential", "model": "exponential1d", "alpha": 0.5, "points": ["1/2"], "out": {:?}}}"#,
            out_path.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = hjpot(&["potential", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let s = column(&std::fs::read_to_string(&out_path).unwrap(), "S")[0];
    let l = 2f64.ln();
    assert!((s - (l * l / 2.0 - l * l * l / 6.0)).abs() < 1e-8);
    let wrong = hjpot(&["recover", "--config", cfg.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn model_spec_restricts_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("model.json");
    std::fs::write(&spec, r#"{"dim": 1, "domain": [[0.5, 3.0]], "model": "exponential1d"}"#).unwrap();
    let spec = spec.to_str().unwrap();
    assert!(hjpot(&["potential", "--model", spec, "--point", "1/2"]).status.success());
    assert_eq!(hjpot(&["potential", "--model", spec, "--point", "1/4"]).status.code(), Some(2));
}

#[test]
fn keep_going_reports_failed_rows() {
    let out = hjpot(&["recover", "--model", "exponential1d", "--point", "1", "--point", "0.0001", "--keep-going"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",ok"));
    assert!(lines[2].contains("error:"), "{}", lines[2]);
}
