use std::path::Path;
use std::process::{Command, Output};

fn upldp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upldp")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_then_fit_every_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.json");
    let out = upldp(&["gen", "--n", "40", "--m", "4", "--d", "3", "--B", "1", "--L", "1", "--seed", "5", "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&data).unwrap()).unwrap();
    assert_eq!(json["version"], "upldp-1");
    assert_eq!(json["config"]["B"], 1.0);
    assert_eq!(json["users"].as_array().unwrap().len(), 40);

    for est in ["mle", "rr", "userwise", "group", "aup"] {
        let fit = dir.path().join(format!("{est}.json"));
        let out = upldp(&[
            "fit", "--estimator", est, "--eps", "2", "--delta", "1e-5", "--data", path(&data), "--out", path(&fit), "--T", "20",
        ]);
        assert!(out.status.success(), "{est}: {}", String::from_utf8_lossy(&out.stderr));
        let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
        assert_eq!(result["theta_hat"].as_array().unwrap().len(), 3);
        assert!(result["iterations_done"].as_u64().unwrap() >= 1);
    }
}

#[test]
fn kwise_data_supports_every_estimator_but_rr() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("k.json");
    let fit = dir.path().join("fit.json");
    assert!(upldp(&["gen", "--n", "16", "--m", "3", "--d", "3", "--B", "1", "--L", "1", "--K", "3", "--seed", "1", "--out", path(&data)])
        .status
        .success());
    let run = |est: &str| {
        upldp(&["fit", "--estimator", est, "--eps", "1", "--delta", "1e-5", "--data", path(&data), "--out", path(&fit), "--T", "10"])
    };
    assert!(run("mle").status.success());
    assert!(run("aup").status.success());
    assert_eq!(run("rr").status.code(), Some(3));
}

#[test]
fn account_prints_noise_plan() {
    let out = upldp(&["account", "--eps", "1", "--delta", "1e-5", "--n", "1000", "--batch", "100", "--T", "50"]);
    assert!(out.status.success());
    let plan: upldp::NoisePlan = serde_json::from_slice(&out.stdout).unwrap();
    let expected = upldp::mech::privacy_account(&upldp::PrivacyBudget::new(1.0, 1e-5).unwrap(), 1000, 100, 50).unwrap();
    assert_eq!(plan, expected);
}

#[test]
fn invalid_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let cases: Vec<Vec<&str>> = vec![
        vec!["account", "--eps", "-1", "--delta", "1e-5", "--n", "10", "--batch", "5", "--T", "3"],
        vec!["account", "--eps", "1", "--delta", "1e-5", "--n", "10", "--batch", "11", "--T", "3"],
        vec!["account", "--eps", "1"],
        vec!["fit", "--estimator", "sgd", "--eps", "1", "--delta", "1e-5", "--data", "x", "--out", "y"],
        vec!["gen", "--n", "4", "--m", "1", "--d", "1", "--B", "1", "--L", "1", "--seed", "0", "--out", out],
        vec!["frobnicate"],
    ];
    for args in cases {
        assert_eq!(upldp(&args).status.code(), Some(2), "{args:?}");
    }
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_upldp"))
        .args(["account", "--eps", "1", "--delta", "1e-5", "--n", "10", "--batch", "5", "--T", "3"])
        .env("UPLDP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = dir.path().join("out.json");
    let code = upldp(&["fit", "--estimator", "mle", "--eps", "1", "--delta", "1e-5", "--data", path(&missing), "--out", path(&out)])
        .status
        .code();
    assert_eq!(code, Some(3));
    let corrupt = dir.path().join("corrupt.json");
    std::fs::write(&corrupt, "{\"version\":\"upldp-0\"}").unwrap();
    let code = upldp(&["fit", "--estimator", "mle", "--eps", "1", "--delta", "1e-5", "--data", path(&corrupt), "--out", path(&out)])
        .status
        .code();
    assert_eq!(code, Some(3));
}

#[test]
fn help_exits_zero() {
    assert_eq!(upldp(&["--help"]).status.code(), Some(0));
}
