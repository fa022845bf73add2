mod common;

use std::process::Command;

use common::golden;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["psdm".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = gauss_psd::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn golden_transcripts_match() {
    let failed = golden::check_all();
    assert!(failed.is_empty(), "transcripts differ: {failed:?} (rerun with UPDATE_GOLDEN=1 after review)");
}

#[test]
fn eval_prints_quarter_e_minus_two() {
    let tmp = tempfile::tempdir().unwrap();
    golden::write_inputs(tmp.path());
    let model = tmp.path().join("neg.json");
    let (code, out, _) = run(&["eval", "--model", model.to_str().unwrap(), "--at", "1"]);
    assert_eq!(code, 0);
    let expected = 0.25 * (-2.0f64).exp();
    assert_eq!(out.trim(), format!("{expected:.12}"));
}

#[test]
fn normalize_then_integrate_prints_one() {
    let tmp = tempfile::tempdir().unwrap();
    golden::write_inputs(tmp.path());
    let model = tmp.path().join("neg.json");
    let unit = tmp.path().join("unit.json");
    let (code, _, _) = run(&["normalize", "--model", model.to_str().unwrap(), "--out", unit.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, out, _) = run(&["integrate", "--model", unit.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "1.000000000000");
}

#[test]
fn empty_observations_emit_initial_model() {
    let tmp = tempfile::tempdir().unwrap();
    golden::write_inputs(tmp.path());
    let comps = tmp.path().join("chain.json");
    let obs = tmp.path().join("empty.csv");
    let (code, out, _) = run(&["hmm-filter", "--components", comps.to_str().unwrap(), "--obs", obs.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (model, meta) = gauss_psd::io::model_from_json(&out).unwrap();
    assert_eq!(model.n(), 1);
    assert_eq!(meta.get("step").map(String::as_str), Some("0"));
}

#[test]
fn numerical_errors_exit_two_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    golden::write_inputs(tmp.path());
    let bad = tmp.path().join("tampered.json");
    let (code, _, err) = run(&["integrate", "--model", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "NotPsd");
}

#[test]
fn usage_errors_exit_one() {
    let (code, out, err) = run(&["integrate", "--nope"]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    assert!(err.contains("Usage"));
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("hmm-filter"));
    let (code, _, err) = run(&["eval", "--model", "/nonexistent/model.json", "--at", "0"]);
    assert_eq!(code, 1);
    assert!(err.contains("\"Io\""));
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_psdm");
    let status = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    let status = Command::new(bin).args(["oracle-check", "hypercube", "--cases", "2"]).output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    let line = String::from_utf8(status.stdout).unwrap();
    assert!(line.contains("\"pass\": true"));
}

#[test]
fn fit_is_deterministic_given_seed() {
    let tmp = tempfile::tempdir().unwrap();
    golden::write_inputs(tmp.path());
    let samples = tmp.path().join("samples.csv");
    let args = [
        "fit", "--samples", samples.to_str().unwrap(), "--domain", "-3:3", "--lambda", "1e-3", "--eta", "1",
        "--centers", "8", "--seed", "9", "--max-iters", "100",
    ];
    let (c1, a, _) = run(&args);
    let (c2, b, _) = run(&args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
}

#[test]
fn fit_without_hyperparameters_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    golden::write_inputs(tmp.path());
    let samples = tmp.path().join("samples.csv");
    let (code, _, err) = run(&["fit", "--samples", samples.to_str().unwrap(), "--domain", "-3:3", "--lambda", "1"]);
    assert_eq!(code, 1);
    assert!(err.contains("InvalidArgument"));
}
