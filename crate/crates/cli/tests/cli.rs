use std::process::Command;

use pathcalc_cli::{run, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};
use serde_json::Value;

struct Run {
    code: u8,
    out: String,
    err: String,
}

fn pathcalc(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("pathcalc").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn json(r: &Run) -> Value {
    serde_json::from_str(&r.out).unwrap_or_else(|e| panic!("not JSON ({e}): {}", r.out))
}

fn without_timestamp(r: &Run) -> Value {
    let mut v = json(r);
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

fn term(report: &Value, name: &str) -> f64 {
    report["terms"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["name"] == name)
        .unwrap_or_else(|| panic!("no term {name}"))["value"]
        .as_f64()
        .unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let r = pathcalc(&[flag]);
        assert_eq!(r.code, EXIT_PASS, "{flag}");
        assert!(!r.out.is_empty());
    }
    assert_eq!(pathcalc(&["levy", "--help"]).code, EXIT_PASS);
}

#[test]
fn usage_errors_exit_one_with_a_one_line_reason() {
    let cases: [&[&str]; 6] = [
        &[],
        &["levy", "--bogus"],
        &["levy", "--steps", "many"],
        &["tanaka", "--steps", "16"],
        &["ito"],
        &["levy", "--convention", "third"],
    ];
    for args in cases {
        let r = pathcalc(args);
        assert_eq!(r.code, EXIT_ERROR, "{args:?}");
        let first = r.err.lines().next().unwrap();
        assert!(first.starts_with("pathcalc: error[usage]: "), "{args:?}: {first}");
    }
    assert!(pathcalc(&["tanaka"]).err.contains("--K"));
}

#[test]
fn runtime_errors_exit_one() {
    let r = pathcalc(&["maxmart", "--x0", "1", "--steps", "50", "--paths", "10"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.starts_with("pathcalc: error[domain]: "), "{}", r.err);
    let r = pathcalc(&["ito", "--functional", "running_max", "--steps", "50", "--paths", "1"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.starts_with("pathcalc: error[unsupported]: "), "{}", r.err);
    let r = pathcalc(&["tanaka", "--K", "0", "--convention", "half", "--steps", "50", "--paths", "1"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.starts_with("pathcalc: error[convention]: "), "{}", r.err);
}

#[test]
fn tanaka_terms_match_hand_sums_on_a_tiny_grid() {
    let sim = pathcalc(&["simulate", "--steps", "16", "--seed", "1", "--format", "csv"]);
    assert_eq!(sim.code, EXIT_PASS);
    let x: Vec<f64> = sim.out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(x.len(), 17);

    let r = pathcalc(&["tanaka", "--K", "0.0", "--steps", "16", "--seed", "1", "--paths", "1", "--epsilon", "0.3", "--dy", "0.15"]);
    let report = &json(&r)["report"];
    let (k, eps) = (0.0, 0.3);
    let sgn = |v: f64| if v <= k { -1.0 } else { 1.0 };
    let mut ito = 0.0;
    let mut band = 0.0;
    for j in 0..16 {
        let d = x[j + 1] - x[j];
        ito += sgn(x[j]) * d;
        if (x[j] - k).abs() <= eps {
            band += d * d;
        }
    }
    let local_time = band / (4.0 * eps);
    assert!((report["lhs"].as_f64().unwrap() - (x[16] - k).abs()).abs() < 1e-15);
    assert!((term(report, "f_X0") - (x[0] - k).abs()).abs() < 1e-15);
    assert!((term(report, "ito_integral") - ito).abs() < 1e-12);
    assert!((term(report, "local_time_term") - 2.0 * local_time).abs() < 1e-12);
    let residual = report["residual"].as_f64().unwrap();
    let expected = if residual.abs() < 0.1 { EXIT_PASS } else { EXIT_FAIL };
    assert_eq!(r.code, expected);
}

#[test]
fn property_failure_exits_two() {
    let r = pathcalc(&["tanaka", "--K", "0", "--steps", "200", "--paths", "5", "--tol", "1e-12"]);
    assert_eq!(r.code, EXIT_FAIL);
    assert_eq!(json(&r)["report"]["passed"], false);
}

#[test]
fn identical_arguments_give_identical_reports() {
    let args = ["levy", "--steps", "2000", "--paths", "8", "--seed", "3", "--epsilon", "0.05"];
    let a = pathcalc(&args);
    let b = pathcalc(&args);
    assert_eq!(a.code, b.code);
    assert_eq!(without_timestamp(&a), without_timestamp(&b));
}

#[test]
fn thread_cap_does_not_change_results() {
    let base = ["occupation", "--steps", "2000", "--paths", "6", "--seed", "9"];
    let one = pathcalc(&[&base[..], &["--threads", "1"]].concat());
    let three = pathcalc(&[&base[..], &["--threads", "3"]].concat());
    assert_eq!(one.code, three.code);
    assert_eq!(json(&one)["report"], json(&three)["report"]);
    assert_eq!(pathcalc(&[&base[..], &["--threads", "0"]].concat()).code, EXIT_ERROR);
}

#[test]
fn config_file_is_merged_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.json");
    std::fs::write(&file, r#"{"steps": 64, "seed": 5, "K": 0.25, "paths": 1, "convention": "quarter"}"#).unwrap();
    let r = pathcalc(&["tanaka", "--config", file.to_str().unwrap(), "--seed", "6"]);
    let cfg = &json(&r)["config"];
    assert_eq!(cfg["steps"], 64);
    assert_eq!(cfg["seed"], 6);
    assert_eq!(cfg["K"], 0.25);

    std::fs::write(&file, r#"{"stepz": 64}"#).unwrap();
    let r = pathcalc(&["tanaka", "--config", file.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.starts_with("pathcalc: error[usage]: bad config"), "{}", r.err);
}

#[test]
fn seed_falls_back_to_environment() {
    let bin = env!("CARGO_BIN_EXE_pathcalc");
    let out = Command::new(bin)
        .args(["simulate", "--steps", "10"])
        .env("PATHCALC_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["seed"], 77);

    let out = Command::new(bin)
        .args(["simulate", "--steps", "10", "--seed", "78"])
        .env("PATHCALC_SEED", "77")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["seed"], 78);

    let out = Command::new(bin).args(["simulate"]).env("PATHCALC_SEED", "x").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_pathcalc");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["nonsense"]), Some(1));
    assert_eq!(code(&["condition-h"]), Some(0));
    assert_eq!(code(&["tanaka", "--K", "0", "--steps", "100", "--paths", "3", "--tol", "0"]), Some(2));
}

#[test]
fn csv_output_goes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("qv.csv");
    let r = pathcalc(&["qv-identity", "--steps", "5000", "--paths", "4", "--format", "csv", "--out", out.to_str().unwrap()]);
    assert!(r.out.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("schema_version,identity,path,lhs,rhs,residual"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn simulate_dumps_path_files() {
    let dir = tempfile::tempdir().unwrap();
    let r = pathcalc(&["simulate", "--steps", "20", "--paths", "3", "--dump", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, EXIT_PASS);
    assert_eq!(json(&r)["report"]["n_paths"], 3);
    for j in 0..3 {
        let file = dir.path().join(format!("path_{j:05}.csv"));
        let path = pathcalc::paths::Path::read_csv(std::fs::File::open(file).unwrap()).unwrap();
        assert_eq!(path.end_index(), 20);
    }
}

#[test]
fn every_check_runs() {
    let small = ["--steps", "2000", "--paths", "4", "--seed", "2"];
    let cases: [&[&str]; 10] = [
        &["ito", "--functional", "square"],
        &["levy-min", "--convention", "half"],
        &["meyer-tanaka", "--functional", "abs_terminal_minus", "--K", "0.1"],
        &["meyer-tanaka", "--functional", "running_max", "--shift", "running_max"],
        &["meyer-tanaka", "--functional", "quadratic_variation", "--compensator"],
        &["occupation", "--psi", "square"],
        &["maxmart", "--psi", "identity", "--checkpoints", "0.5,1"],
        &["recover-psi"],
        &["mollify-report", "--functional", "running_max", "--n-list", "1,4,16"],
        &["condition-h", "--psi", "exp_neg"],
    ];
    for args in cases {
        let r = pathcalc(&[args, &small[..]].concat());
        assert_ne!(r.code, EXIT_ERROR, "{args:?}: {}", r.err);
        let v = json(&r);
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["config"]["command"], args[0]);
        assert!(v["timestamp"].is_string());
    }
}

#[test]
fn catalogue_checks_pass() {
    for args in [
        &["condition-h"][..],
        &["recover-psi", "--steps", "500", "--paths", "5"],
        &["mollify-report", "--functional", "abs_terminal_minus", "--steps", "100"],
    ] {
        let r = pathcalc(args);
        assert_eq!(r.code, EXIT_PASS, "{args:?}: {}", r.out);
    }
}

#[test]
fn all_runs_selected_criteria() {
    let r = pathcalc(&["all", "--scale", "quick", "--criteria", "1,8", "--format", "csv"]);
    let mut lines = r.out.lines();
    assert_eq!(lines.next(), Some("id,name,passed,summary"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("1,") && rows[1].starts_with("8,"));
    let all_passed = rows.iter().all(|l| l.split(',').nth(2) == Some("true"));
    assert_eq!(r.code, if all_passed { EXIT_PASS } else { EXIT_FAIL });
    assert_eq!(pathcalc(&["all", "--criteria", "42"]).code, EXIT_ERROR);
}
