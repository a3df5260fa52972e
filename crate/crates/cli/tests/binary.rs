use std::path::PathBuf;
use std::process::{Command, Output};

use aabsp::OptResult;

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn aabsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aabsp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_config(dir: &tempfile::TempDir) -> PathBuf {
    let text = std::fs::read_to_string(repo("configs/example1.toml")).unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(&path, format!("{text}fixed_tau = 0.14\nn_max = 4\n")).unwrap();
    path
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let o = aabsp(&["evaluate", "--config", "/nonexistent/x.toml", "--n", "2", "--r", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let cfg = repo("configs/example1.toml");
    let o = aabsp(&["evaluate", "--config", cfg.to_str().unwrap(), "--n", "2", "--r", "3"]);
    assert!(!o.status.success());
    let o = aabsp(&["optimize", "--config", cfg.to_str().unwrap(), "--mode", "bogus"]);
    assert!(!o.status.success());
}

#[test]
fn optimize_json_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir);
    let text = stdout(&aabsp(&["optimize", "--config", cfg.to_str().unwrap(), "--compare", "--json"]));
    let parsed: OptResult = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&parsed).unwrap() + "\n", text);
    let c = parsed.comparisons.as_ref().unwrap();
    assert_eq!(parsed.best_plan, c.aabsp.plan);
    assert!(c.aabsp.eval.total <= c.cbsp.eval.total);
    let table = stdout(&aabsp(&["optimize", "--config", cfg.to_str().unwrap(), "--compare"]));
    assert!(table.contains("RRS1") && table.contains("best per n"));
}

#[test]
fn evaluate_reports_the_cached_risk() {
    let cfg = repo("configs/example1.toml");
    let args = ["--json", "evaluate", "--config", cfg.to_str().unwrap(), "--n", "5", "--r", "3", "--m", "2", "--tau1", "0.14"];
    let v: serde_json::Value = serde_json::from_str(&stdout(&aabsp(&args))).unwrap();
    let parts = ["sampling_cost", "stress_cost", "time_cost", "decision_loss"];
    let sum: f64 = parts.iter().map(|k| v[k].as_f64().unwrap()).sum();
    assert!((sum - v["total"].as_f64().unwrap()).abs() < 1e-12);
    assert_eq!(v["sampling_cost"].as_f64().unwrap(), 5.0 * 0.25 + 3.0 * 0.25);
}

#[test]
fn simulate_writes_replayable_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo("configs/example1.toml");
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("sims");
    let plan = ["--n", "5", "--r", "3", "--m", "2", "--tau1", "0.14"];
    let mut args = vec!["--json", "simulate", "--config", cfg, "--reps", "4", "--seed", "9", "--out", out.to_str().unwrap()];
    args.extend(plan);
    let rows: serde_json::Value = serde_json::from_str(&stdout(&aabsp(&args))).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
    let again: serde_json::Value = serde_json::from_str(&stdout(&aabsp(&args))).unwrap();
    assert_eq!(again, rows);
    for (i, row) in rows.as_array().unwrap().iter().enumerate() {
        let csv = out.join(format!("rep_{:04}.csv", i + 1));
        let mut dargs = vec!["--json", "decide", "--config", cfg, "--data", csv.to_str().unwrap()];
        dargs.extend(plan);
        let d: serde_json::Value = serde_json::from_str(&stdout(&aabsp(&dargs))).unwrap();
        assert_eq!(d["action"], row["decision"]["action"]);
        assert_eq!(d["d1"], row["decision"]["d1"]);
        let rel = (d["phi"].as_f64().unwrap() / row["decision"]["phi"].as_f64().unwrap() - 1.0).abs();
        assert!(rel < 1e-9, "rep {i}: {rel}");
    }
}

#[test]
fn fit_reproduces_the_solar_device_estimates() {
    let data = repo("data/solar_device.csv");
    let args = ["--json", "fit", "--data", data.to_str().unwrap(), "--n", "35", "--tau1", "5", "--tau2", "6", "--curve", "1,5,10"];
    let v: serde_json::Value = serde_json::from_str(&stdout(&aabsp(&args))).unwrap();
    let lam: Vec<f64> = serde_json::from_value(v["lambda_hat"].clone()).unwrap();
    assert!((lam[0] - 0.0222).abs() < 5e-4 && (lam[1] - 0.0960).abs() < 5e-4, "{lam:?}");
}

#[test]
fn mc_risk_checks_agreement() {
    let cfg = repo("configs/example1.toml");
    let args = ["--json", "mc-risk", "--config", cfg.to_str().unwrap(), "--n", "3", "--r", "2", "--reps", "20000", "--analytic"];
    let v: serde_json::Value = serde_json::from_str(&stdout(&aabsp(&args))).unwrap();
    assert_eq!(v["reps"], 20000);
    assert!(v["agrees"].is_boolean());
}
