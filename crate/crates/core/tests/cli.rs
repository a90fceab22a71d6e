use std::path::Path;
use std::process::{Command, Output};

fn reshuffle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reshuffle")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "rr.json",
        r#"{"method":"rr","R":1.0,"s":0.75,"q":0.5,"K":50000,"seed":1,"log_stride":100,"problem":"example1"}"#,
    );
    let csv = dir.path().join("rr.csv").display().to_string();
    let out = reshuffle(&["run", "--config", &config, "--out", &csv]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,dist,f_gap,xbar_dist,alpha_bar");
    assert_eq!(lines.count(), 501);

    let stdout = reshuffle(&["run", "--config", &config]);
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), text);

    let fit = reshuffle(&["fit", "--csv", &csv, "--column", "xbar_dist", "--kmin", "1000"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let value: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    let slope = value["slope"].as_f64().unwrap();
    assert!((-1.0..-0.5).contains(&slope), "slope {slope}");
}

#[test]
fn birr_run_adds_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "birr.json",
        r#"{"method":"birr","R":1.0,"s":0.75,"q":0.5,"K":1000,"log_stride":500,"problem":"example1"}"#,
    );
    let out = reshuffle(&["run", "--config", &config]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,dist,f_gap,xbar_dist,alpha_bar,bhat_norm,output_dist");
    assert!(lines[1].ends_with("NaN,NaN"));
    assert!(!lines[3].contains("NaN"));
}

#[test]
fn run_accepts_inline_problems_and_one_based_orders() {
    let dir = tempfile::tempdir().unwrap();
    let problem = reshuffle::FiniteSumProblem::example1().to_json().unwrap();
    let config = write(
        dir.path(),
        "ig.json",
        &format!(r#"{{"method":"ig","R":1.0,"s":0.75,"K":10,"sigma":[2,1],"problem":{problem}}}"#),
    );
    let out = reshuffle(&["run", "--config", &config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 12);
}

#[test]
fn compare_reports_fits_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let figs = dir.path().join("figs");
    let report = dir.path().join("report.json");
    let out = reshuffle(&[
        "compare",
        "--problem",
        "example1",
        "--methods",
        "rr,sgd",
        "--seeds",
        "4",
        "--K",
        "50000",
        "--out-dir",
        figs.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.code().is_some_and(|c| c <= 1));
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(value["fits"]["rr.xbar_f_gap"]["slope"].is_number());
    assert_eq!(value["trajectories"].as_array().unwrap().len(), 8);
    assert!(figs.join("rr_figure.csv").exists());
    assert!(figs.join("sgd_seed3.csv").exists());
}

#[test]
fn suite_prints_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("suite.json");
    let out = reshuffle(&["suite", "--out", report.to_str().unwrap(), "--fixtures", "smooth-seed1"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    assert_eq!(out.status.code(), Some(if stdout.contains("FAIL ") { 1 } else { 0 }));
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(value["checks"].as_array().unwrap().len(), lines.len());
}

#[test]
fn errors_exit_with_code_two() {
    let out = reshuffle(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = reshuffle(&["compare", "--problem", "no-such-fixture.json", "--K", "100"]);
    assert_eq!(out.status.code(), Some(2));
    let out = reshuffle(&["suite", "--out", "/tmp/x.json", "--fixtures", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}
