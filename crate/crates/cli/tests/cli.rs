use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const Y1ALPHA: f64 = 0.331_209_643_715_011_32;
const PSI_09: f64 = 3.873_918_388_578_700_7;
const PI_09: f64 = 0.216_765_248_111_679_75;

fn drawdown(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drawdown"))
        .args(args)
        .env_remove("DRAWDOWN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&stdout(&drawdown(args))).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn write_params(dir: &Path, body: &str) -> String {
    let path = dir.join("params.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn solve_reports_roots_and_boundaries() {
    let v = json(&["solve"]);
    let g1 = v["roots"]["gamma1"].as_f64().unwrap();
    let g2 = v["roots"]["gamma2"].as_f64().unwrap();
    assert!(g1 > 0.0 && g1 < 1.0);
    assert!(g2 < 0.0);
    assert!(rel(v["boundaries"]["y1alpha"].as_f64().unwrap(), Y1ALPHA) < 1e-10);
    assert!(v["diagnostics"]["continuity_rel"].as_f64().unwrap() < 1e-10);
}

#[test]
fn shipped_params_file_matches_builtin() {
    let file = concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/example_params.json");
    assert_eq!(json(&["solve", "--params", file]), json(&["solve"]));
}

#[test]
fn invalid_params_exit_two_with_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_params(
        dir.path(),
        r#"{"r":0.02,"mu":0.06,"sigma":-0.2,"kappa":0.04,"lam":0.04,"alpha":0.8}"#,
    );
    let out = drawdown(&["solve", "--params", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SigmaNotPositive"));

    let path = write_params(
        dir.path(),
        r#"{"r":0.02,"mu":0.06,"sigma":0.2,"kappa":0.04,"lam":0.04,"alpha":0.8,"beta":1}"#,
    );
    let out = drawdown(&["solve", "--params", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ParamsFileError"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(drawdown(&["solve", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(drawdown(&["value"]).status.code(), Some(2));
    assert_eq!(drawdown(&["policy", "--w", "0.5", "--strategy", "bogus"]).status.code(), Some(2));
    let out = drawdown(&["policy", "--w", "0.5", "--strategy", "ddprob"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DomainError"));
    let out = Command::new(env!("CARGO_BIN_EXE_drawdown"))
        .args(["solve"])
        .env("DRAWDOWN_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn value_examples() {
    let at_zero = json(&["value", "--w", "0", "--x", "2"]);
    assert!((at_zero["psi"].as_f64().unwrap() - 27.0).abs() < 1e-12);
    let v = json(&["value", "--w", "0.9"]);
    assert!(rel(v["psi"].as_f64().unwrap(), PSI_09) < 1e-10);
    let scaled = json(&["value", "--w", "1.8", "--m", "2"]);
    assert!(rel(scaled["psi"].as_f64().unwrap(), PSI_09) < 1e-10);
}

#[test]
fn policy_examples() {
    let at_max = json(&["policy", "--w", "1"]);
    assert_eq!(at_max["amount"].as_f64().unwrap(), 0.0);
    let p = json(&["policy", "--w", "0.9"]);
    assert!(rel(p["amount"].as_f64().unwrap(), PI_09) < 1e-10);
    let c = json(&["policy", "--w", "0.5", "--strategy", "const:0.3"]);
    assert!((c["amount"].as_f64().unwrap() - 0.15).abs() < 1e-15);
    let o = json(&["policy", "--w", "0.5", "--m", "2", "--strategy", "occupation"]);
    assert_eq!(o["strategy"], "occupation:2");
}

#[test]
fn sweep_table_shape_and_orderings() {
    let text = stdout(&drawdown(&["sweep", "--grid", "50"]));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "z,psi,pi_optimal,pi_ruin,pi_ddprob,pi_occupation");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 50);
    let num = |s: &str| s.parse::<f64>().unwrap();
    for r in &rows {
        let (z, psi, opt, ruin, occ) = (num(r[0]), num(r[1]), num(r[2]), num(r[3]), num(r[5]));
        assert!(z > 0.0 && z <= 1.0 && psi > 0.0);
        if z < 0.8 {
            assert!(r[4].is_empty());
            assert_eq!(opt, occ);
            assert!(occ > ruin);
        } else if z > 0.8 {
            assert_eq!(opt, num(r[4]));
            assert!(opt < ruin);
            assert_eq!(occ, ruin);
        }
    }
    assert_eq!(rows.last().unwrap()[0], "1");
}

#[test]
fn simulate_is_bitwise_reproducible_across_thread_counts() {
    let args = ["simulate", "--w", "0.7", "--paths", "300", "--dt", "0.01", "--seed", "7"];
    let once = stdout(&drawdown(&args));
    let again = stdout(&drawdown(&args));
    assert_eq!(once, again);
    let capped = Command::new(env!("CARGO_BIN_EXE_drawdown"))
        .args(args)
        .env("DRAWDOWN_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(capped.stdout).unwrap(), once);
    assert!(once.starts_with("strategy,mean,std_err,n_paths,frac_absorbed,frac_max_increased\noptimal,"));
}

#[test]
fn simulate_from_zero_wealth_is_exact() {
    let text = stdout(&drawdown(&["simulate", "--w", "0", "--x", "1", "--paths", "10", "--format", "json"]));
    let v: Value = serde_json::from_str(&text).unwrap();
    let e = &v[0]["estimate"];
    assert_eq!(e["mean"].as_f64().unwrap(), 26.0);
    assert_eq!(e["std_err"].as_f64().unwrap(), 0.0);
    assert_eq!(e["frac_absorbed"].as_f64().unwrap(), 1.0);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = drawdown(&["sweep", "--grid", "3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 4);
}

#[test]
fn compare_orders_optimal_below_ruin_in_drawdown() {
    let text = stdout(&drawdown(&[
        "compare", "--w", "0.5", "--paths", "2000", "--dt", "0.01", "--estimator", "killed", "--format", "json",
    ]));
    let v: Value = serde_json::from_str(&text).unwrap();
    let labels: Vec<&str> = v["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["strategy"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["optimal", "ruin", "const:0", "const:1"]);
    let d = &v["differences"][0];
    assert_eq!((d["first"].as_str(), d["second"].as_str()), (Some("optimal"), Some("ruin")));
    assert!(d["mean"].as_f64().unwrap() < 0.0);
    assert!(d["mean"].as_f64().unwrap() + 2.0 * d["std_err"].as_f64().unwrap() < 0.0);
}

const REPORT_NAMES: [&str; 28] = [
    "roots.vieta_product",
    "roots.vieta_sum",
    "roots.gamma1_in_unit_interval",
    "roots.gamma2_negative",
    "boundary.ratio_equation",
    "boundary.continuity",
    "boundary.slope_continuity",
    "boundary.smooth_fit_slope",
    "boundary.smooth_fit_curvature",
    "boundary.slope_at_yalpha",
    "fbp.residual",
    "bvp.residual",
    "bvp.zeta_at_zero",
    "bvp.curvature_divergence",
    "legendre.max_gap",
    "legendre.argmax_at_one",
    "legendre.argmax_at_alpha",
    "hjb.at_optimum",
    "hjb.min_over_perturbations",
    "hjb.argmin_offset",
    "hjb.zero_investment",
    "hjb.doubled_investment_margin",
    "ordering.below_optimal_equals_occupation",
    "ordering.below_occupation_exceeds_ruin",
    "ordering.above_equalities",
    "ordering.above_ruin_exceeds_optimal",
    "ordering.jump_at_boundary",
    "mc.standard_errors_from_value",
];

#[test]
fn verify_passes_with_stable_schema() {
    let out = drawdown(&["verify", "--paths", "200", "--dt", "0.01"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    let names: Vec<&str> = v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, REPORT_NAMES);
    for e in v["entries"].as_array().unwrap() {
        let keys: Vec<&String> = e.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 5);
    }
}

#[test]
fn verify_fails_on_corrupted_boundaries() {
    let out = drawdown(&["verify", "--paths", "0", "--corrupt-boundaries", "1.01"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
    let continuity = v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["name"] == "boundary.continuity")
        .unwrap();
    assert_eq!(continuity["pass"], false);
}
