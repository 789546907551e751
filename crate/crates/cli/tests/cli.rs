use std::path::Path;
use std::process::{Command, Output};

fn cms_lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cms-lab")).args(args).arg("--out-dir").arg(out).output().unwrap()
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn zeros_report_the_sum_of_squares() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms_lab(&["zeros", "--family", "hermite", "--n", "5"], dir.path());
    assert!(o.status.success());
    let r = report(dir.path());
    assert!((r["results"]["sum_of_squares"].as_f64().unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(r["pass"], true);
    for c in r["checks"].as_array().unwrap() {
        assert!(c["tolerance"].is_f64());
    }
    let csv = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert_eq!(csv.lines().next(), Some("z"));
}

#[test]
fn flow_from_the_origin() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms_lab(&["flow", "--family", "hermite", "--n", "2", "--x0", "0,0", "--t-end", "1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x1,x2"));
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[1] + 1.0).abs() < 1e-6 && (last[2] - 1.0).abs() < 1e-6);
}

#[test]
fn negative_starts_parse() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms_lab(&["heat-check", "--family", "hermite", "--n", "3", "--x0", "-1.5,-0.2,0.9"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"experiment": "zeros", "family": "laguerre", "n": 4, "nu": 2.0}"#).unwrap();
    let out = dir.path().join("out");
    let o = cms_lab(&["zeros", "--config", cfg.to_str().unwrap(), "--n", "3"], &out);
    assert!(o.status.success());
    let r = report(&out);
    assert_eq!(r["inputs"]["n"], 3);
    assert!((r["results"]["sum"].as_f64().unwrap() - 12.0).abs() < 1e-12);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"experiment": "zeros", "colour": "blue"}"#).unwrap();
    let o = cms_lab(&["zeros", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let cases: [&[&str]; 5] = [
        &["zeros", "--family", "torus"],
        &["flow", "--family", "hermite", "--n", "2", "--x0", "1,0"],
        &["flow", "--family", "jacobi", "--n", "2", "--p", "0.2"],
        &["expect", "--identity", "no-such-identity"],
        &["stability", "--family", "jacobi-noncompact"],
    ];
    for args in cases {
        let o = cms_lab(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
    }
}

#[test]
fn failed_check_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms_lab(
        &["stability", "--family", "hermite", "--n", "5", "--law", "prefactor", "--x0", "-1,0,1,2,3", "--t-end", "10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(report(dir.path())["pass"], false);
    assert!(std::fs::read_to_string(dir.path().join("series.csv")).unwrap().starts_with("t,distance,bound\n"));
}

#[test]
fn solver_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms_lab(&["stability", "--family", "jacobi-noncompact", "--law", "contraction", "--t-end", "5"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn reproducible_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["expect", "--identity", "martingale-hermite-heat", "--paths", "500", "--seed", "4", "--reproducible"];
    assert!(cms_lab(&args, dir.path()).status.success());
    let a = std::fs::read(dir.path().join("report.json")).unwrap();
    assert!(cms_lab(&args, dir.path()).status.success());
    assert_eq!(a, std::fs::read(dir.path().join("report.json")).unwrap());
    assert!(report(dir.path()).get("timestamp").is_none());

    assert!(cms_lab(&args[..7], dir.path()).status.success());
    assert!(report(dir.path())["timestamp"].is_u64());
}

#[test]
fn expect_reports_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let o = cms_lab(&["expect", "--identity", "hermite-brownian", "--paths", "4000", "--seed", "7"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path());
    let rep = &r["results"]["reports"][0];
    assert!(rep["z_score"].as_f64().unwrap() <= 3.0);
    assert_eq!(r["checks"][0]["tolerance"], 3.0);
    assert_eq!(r["seed"], 7);
}
