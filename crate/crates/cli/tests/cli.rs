use std::path::PathBuf;
use std::process::{Command, Output};

fn qpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../demos")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

const SMALL: &str = "\
[map]
dimension = 1
forward = sinh(x1)
inverse = asinh(x1)

[suite]
name = small
checks = lemma_cal, hermiticity, classical_brackets

[grid]
bounds = -6 6
levels = 121, 241, 481

[bumps]
bump = 0 / 3
";

fn write_cfg(dir: &tempfile::TempDir, text: &str) -> String {
    let p = dir.path().join("suite.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn missing_config_exits_2() {
    let o = qpt(&["run", "/nonexistent/suite.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/suite.cfg"));
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(&dir, &SMALL.replace("[bumps]", "[bumps]\nwidth = 3"));
    let o = qpt(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bumps.width"));
}

#[test]
fn passing_suite_writes_json_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(&dir, SMALL);
    let o = qpt(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["overall_pass"], true);
    let names: Vec<_> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names, ["lemma_cal", "hermiticity", "classical_brackets"]);
}

#[test]
fn csv_format_has_one_row_per_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(&dir, SMALL);
    let out = dir.path().join("report.csv");
    let o = qpt(&["run", &cfg, "--format", "csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("check,residual,value,limit,pass"));
    let rows: Vec<_> = lines.collect();
    assert!(rows.iter().any(|r| r.starts_with("lemma_cal,max_relative_difference,")));
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
}

#[test]
fn atomic_write_leaves_no_temporary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(&dir, SMALL);
    let out = dir.path().join("report.json");
    std::fs::write(&out, "stale").unwrap();
    let o = qpt(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with('{'));
    let entries: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(entries.iter().all(|n| !n.contains(".tmp")), "{entries:?}");
}

#[test]
fn failing_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("checks = lemma_cal", "checks = closed_form, lemma_cal")
        + "\n[check.closed_form]\nalpha = 1\nfirst = 1/cosh(x1) + 0.001\nzeroth = -0.5*tanh(x1)/cosh(x1)\n";
    let cfg = write_cfg(&dir, &text);
    let o = qpt(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["checks"][0]["pass"], false);
    assert_eq!(v["checks"][1]["pass"], true);
}

#[test]
fn print_operator_sinh() {
    let o = qpt(&["print-operator", &demo("sinh.cfg"), "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("P1 = -i ( sum_b c_b d/dx_b + z )"));
    assert!(text.contains("c1 = "));
    assert!(text.contains("z = "));
}

#[test]
fn print_operator_rejects_bad_alpha() {
    let o = qpt(&["print-operator", &demo("sinh.cfg"), "--alpha", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn demo_sinh_passes_and_prints_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sinh.json");
    let o = qpt(&["demo", "sinh", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("max grid discrepancy on [-10, 10], N = 401"));
    assert!(err.contains("overall: PASS"));
}

#[test]
fn demo_polar_fail_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("polar.json");
    let o = qpt(&["demo", "polar-fail", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("SingularJacobian"));
}
