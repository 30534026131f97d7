use std::fs;
use std::process::{Command, Output};

use llmf::analytic::{ll_workload_ccdf_exp, ratio_limit};
use llmf::{CcdfCurve, ModelParams};

fn llmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llmf")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn workload_closed_form_csv() {
    let out = llmf(&[
        "workload", "--method", "closed", "--lambda", "0.5", "--d", "2", "--h", "0.01", "--smax", "5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let curve = CcdfCurve::read_csv(&out.stdout[..]).unwrap();
    assert_eq!(curve.len(), 501);
    let p = ModelParams::exponential(0.5, 2).unwrap();
    for k in [0, 100, 500] {
        assert_eq!(curve.values()[k], ll_workload_ccdf_exp(&p, curve.s(k)));
    }
}

#[test]
fn fixed_point_reports_and_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    let out = llmf(&[
        "workload",
        "--lambda",
        "0.7",
        "--h",
        "0.01",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("converged=true"), "{err}");
    assert!(err.contains("d_K to closed form"), "{err}");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("s,ccdf\n"));
}

#[test]
fn unstable_load_exits_2() {
    let out = llmf(&["workload", "--lambda", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rho >= 1"));
    let out = llmf(&["response", "--law", "det(c=2)", "--lambda", "0.6"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_law_exits_2() {
    let out = llmf(&["workload", "--law", "gamma(k=2)"]);
    assert_eq!(out.status.code(), Some(2));
    let out = llmf(&["workload", "--method", "closed", "--law", "det(c=1)", "--lambda", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn iteration_cap_exits_3() {
    let out = llmf(&["workload", "--lambda", "0.9", "--h", "0.01", "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("converged=false"));
}

#[test]
fn config_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# sweep\njobsize = exp(rate=1)\nlambdas = 0.5,0.9\nds = 2\n").unwrap();
    let out = llmf(&["--config", cfg.to_str().unwrap(), "ratio-sweep"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,d,T_sq,T_ll,ratio");
    assert_eq!(lines.len(), 3);
    let out = llmf(&["--config", cfg.to_str().unwrap(), "ratio-sweep", "--ds", "2,3"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5);
    for row in &lines[1..] {
        let ratio: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(ratio > 1.0 && ratio < ratio_limit(2));
    }
}

#[test]
fn simulate_writes_summary_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    let out = llmf(&[
        "simulate",
        "--n",
        "50",
        "--lambda",
        "0.5",
        "--runs",
        "3",
        "--horizon",
        "500",
        "--overlay",
        "closed",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::read_to_string(&path).unwrap().starts_with("s,ccdf,limit\n"));
    let summary = fs::read_to_string(dir.path().join("sim.csv.summary")).unwrap();
    for key in ["mean_response,", "ci_halfwidth,", "runs,3", "sup_distance,"] {
        assert!(summary.contains(key), "{summary}");
    }
}

#[test]
fn transient_rejects_mismatched_step() {
    let out = llmf(&[
        "transient",
        "--lambda",
        "0.5",
        "--h",
        "0.01",
        "--dt",
        "0.02",
        "--t-end",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = llmf(&[
        "transient",
        "--lambda",
        "0.5",
        "--h",
        "0.01",
        "--t-end",
        "1",
        "--stamps",
        "-1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transient_csv_and_stamps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let out = llmf(&[
        "transient",
        "--lambda",
        "0.5",
        "--h",
        "0.01",
        "--smax",
        "10",
        "--t-end",
        "2",
        "--stamps",
        "0,1,2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t,s,ccdf\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 1001);
    let stamps = fs::read_to_string(dir.path().join("t.csv.stamps")).unwrap();
    assert_eq!(stamps.lines().count(), 4);
}

#[test]
fn tau_frontier_csv() {
    let out = llmf(&[
        "tau-frontier",
        "--law",
        "hexp(scv=20,f=0.5)",
        "--lambdas",
        "0.5",
        "--h",
        "0.01",
        "--tol",
        "1e-3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let tau: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(tau >= 0.25, "{text}");
}
