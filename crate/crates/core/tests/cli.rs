use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cmalab(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cmalab"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.cfg");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.env_remove("CMA_THREADS").output().unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn verify_geometry_passes_on_the_corpus() {
    let tmp = TempDir::new().unwrap();
    let out = cmalab(&["verify-geometry", "--format", "csv"], None, tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(tmp.path());
    assert_eq!(s["status"], "ok");
    assert!(s["result"]["metrics"].as_u64().unwrap() >= 20);
    for row in s["result"]["identity"].as_array().unwrap() {
        assert!(row["bianchi"].as_f64().unwrap() <= 1e-10, "{row}");
    }
    assert_eq!(s["result"]["special_coordinates"]["passed"], true);
    let csv = std::fs::read_to_string(tmp.path().join("out/identity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);
}

#[test]
fn solve_torus_reports_error_and_order() {
    let tmp = TempDir::new().unwrap();
    let out = cmalab(&["solve-torus"], Some("[problem]\nres = 8, 16\n"), tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    let runs = s["result"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert!(runs[1]["error"].as_f64().unwrap() < runs[0]["error"].as_f64().unwrap());
    assert!(s["result"]["orders"][0].as_f64().unwrap() >= 1.8);
    assert!(runs[0]["rescale_error"].as_f64().unwrap() <= 1e-10);
    assert_eq!(s["config"]["problem"]["res"], "8, 16");
    assert_eq!(s["config"]["problem"]["psi"], "sine:0.1");
    assert_eq!(s["config"]["schedule"]["max_iter"], "60");
    assert!(tmp.path().join("out/u_16.bin").exists());
}

#[test]
fn exponential_rhs_goes_through_continuation() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[problem]\nres = 8\npsi = exp:2\nchi = scaled:1.5\n";
    let out = cmalab(&["solve-torus", "--format", "json"], Some(cfg), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(tmp.path());
    assert!(s["result"]["runs"][0]["error"].as_f64().unwrap() <= 1e-10);
    assert!(s["result"]["orders"].is_null());
    let dump: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("out/u_8.json")).unwrap()).unwrap();
    assert_eq!(dump["values"].as_array().unwrap().len(), 8usize.pow(4));
}

#[test]
fn dirichlet_quadratic_is_solved_exactly() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[problem]\nn = 1\nres = 8, 16\npsi = quadratic:0.5\n";
    let out = cmalab(&["solve-dirichlet"], Some(cfg), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    for run in summary(tmp.path())["result"]["runs"].as_array().unwrap() {
        assert!(run["error"].as_f64().unwrap() <= 1e-9, "{run}");
    }
}

#[test]
fn sweep_epsilon_flags_monotonicity() {
    let tmp = TempDir::new().unwrap();
    let out = cmalab(&["sweep-epsilon"], Some("[problem]\nres = 16\n"), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(tmp.path());
    let stages = s["result"]["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 4);
    assert!(stages[1..].iter().all(|st| st["monotone"] == true));
    assert!(tmp.path().join("out/harmonic.bin").exists());
    assert!(tmp.path().join("out/u_03.bin").exists());
}

#[test]
fn geodesic_between_shifted_endpoints_is_linear() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[problem]\nres = 8\nt_res = 8\nphi1 = constant:0.5\n";
    let out = cmalab(&["solve-geodesic"], Some(cfg), tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    assert!(s["result"]["deviation_from_linear"]["extrapolated"].as_f64().unwrap() <= 5e-3);
    assert_eq!(s["files"].as_array().unwrap().len(), 18);
}

#[test]
fn oracle_check_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = cmalab(&["oracle-check"], Some("[problem]\nn = 1\n"), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let out = cmalab(&["oracle-check"], Some("[problem]\nres = 16\n"), tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let s = summary(tmp.path());
    assert_eq!(s["status"], "check_failed");
    assert!(s["reason"].as_str().unwrap().contains("im_abs"));
}

#[test]
fn malformed_config_is_rejected_with_line() {
    let tmp = TempDir::new().unwrap();
    let out = cmalab(&["solve-torus"], Some("[problem]\nn = 2\nres 16\n"), tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let s = summary(tmp.path());
    assert_eq!(s["status"], "rejected");
    assert!(s["reason"].as_str().unwrap().starts_with("line 3:"), "{}", s["reason"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn bad_fields_are_rejected() {
    let cases = [
        ("[problem]\nbogus = 1\n", "unknown key 'bogus'"),
        ("[problem]\nn = two\n", "[problem] n"),
        ("[problem]\nn = 9\n", "[problem] n"),
        ("[problem]\nres = 4\n", "[problem] res"),
        ("[problem]\npsi = cosine:1\n", "unknown spec"),
        ("[problem]\nchi = scaled\n", "takes 1 parameter"),
        ("[schedule]\nsigma = 2\n", "[schedule]"),
        ("[problem]\nn = 1\nn = 2\n", "line 3"),
        ("[output]\nformat = xml\n", "[output] format"),
    ];
    for (cfg, needle) in cases {
        let tmp = TempDir::new().unwrap();
        let out = cmalab(&["solve-torus"], Some(cfg), tmp.path());
        assert_eq!(out.status.code(), Some(2), "{cfg}");
        let reason = summary(tmp.path())["reason"].as_str().unwrap().to_string();
        assert!(reason.contains(needle), "{cfg}: {reason}");
    }
}

#[test]
fn inadmissible_input_is_a_rejection() {
    let tmp = TempDir::new().unwrap();
    let out = cmalab(&["solve-torus"], Some("[problem]\nres = 8\npsi = sine:10\n"), tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(summary(tmp.path())["status"], "rejected");
}

#[test]
fn nonconvergence_exits_three_and_keeps_partial_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[problem]\nn = 1\nres = 16, 32\n[schedule]\nmax_iter = 1\n";
    let out = cmalab(&["solve-dirichlet"], Some(cfg), tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let s = summary(tmp.path());
    assert_eq!(s["status"], "not_converged");
    assert_eq!(s["result"]["runs"].as_array().unwrap().len(), 1);
    assert!(tmp.path().join("out/u_16.bin").exists());
}

#[test]
fn thread_setting_is_validated() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cmalab"))
        .args(["verify-geometry", "--out"])
        .arg(tmp.path())
        .env("CMA_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_cmalab"))
        .args(["verify-geometry", "--out"])
        .arg(tmp.path())
        .env("CMA_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_cmalab")).arg("solve-everything").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_configs_give_identical_dumps() {
    let cfg = "[problem]\nres = 8\n";
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(cmalab(&["solve-torus"], Some(cfg), a.path()).status.code(), Some(0));
    assert_eq!(cmalab(&["solve-torus"], Some(cfg), b.path()).status.code(), Some(0));
    let read = |d: &TempDir| std::fs::read(d.path().join("out/u_8.bin")).unwrap();
    assert_eq!(read(&a), read(&b));
    let strip = |d: &TempDir| {
        let mut s = summary(d.path());
        s["config"]["output"]["dir"] = Value::Null;
        s
    };
    assert_eq!(strip(&a), strip(&b));
}
