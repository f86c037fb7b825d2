//! Exit codes, output files and determinism of the `subheat` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn subheat(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subheat"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = match fs::read_dir(dir) {
        Ok(it) => it.map(|e| e.unwrap().file_name().into_string().unwrap()).collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

#[test]
fn analyze_prints_structure() {
    let dir = tempfile::tempdir().unwrap();
    let o = subheat(&["analyze", "grushin"], dir.path());
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("N=3 p=1 q=3 Q=4 step=2"), "{s}");
    assert!(s.contains("requires lifting (H3 holds)"));
    assert_eq!(names(dir.path()), ["analyze.json", "analyze.timing.json"]);
}

#[test]
fn system_files_and_sibling_groups_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data");
    for f in ["grushin.json", "grushin.group.json"] {
        fs::copy(data.join(f), dir.path().join(f)).unwrap();
    }
    let sys = dir.path().join("grushin.json");
    let o = subheat(&["kernel", "--system", sys.to_str().unwrap(), "--t", "1", "--x", "0.5,0", "--y", "0,0.5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("kernel.json")).unwrap()).unwrap();
    let m = &report["manifest"];
    assert!(m["system_source"].as_str().unwrap().ends_with("grushin.json"));
    assert!(m["group_source"].as_str().unwrap().ends_with("grushin.group.json"));
    assert_eq!(report["values"][0]["method"], "quadrature");
}

#[test]
fn configuration_errors_exit_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for args in [
        vec!["analyze", "nosuch"],
        vec!["analyze", "grushin", "--tol", "nope=1"],
        vec!["analyze", "grushin", "--tol", "kernel.mass_abs=-1"],
        vec!["dist", "grushin", "--x", "0,0", "--y", "1"],
        vec!["cauchy", "euclid2", "--datum", "{\"type\":\"exp-power\",\"alpha\":3,\"mu\":1}"],
        vec!["harnack", "euclid2", "--fields", "0"],
    ] {
        let o = subheat(&args, &out);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    assert!(names(&out).is_empty());
}

#[test]
fn horizon_exceeded_exits_3_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = subheat(
        &["cauchy", "euclid2", "--datum", "{\"type\":\"exp-quadratic\",\"mu\":0.1}", "--t", "1,3", "--envelope-rho", "4"],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon"));
    assert!(names(dir.path()).is_empty());
}

#[test]
fn violations_exit_4_and_still_write_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = subheat(
        &["cauchy", "euclid2", "--datum", "{\"type\":\"constant\",\"value\":1}", "--x", "0.3,0.1", "--tol", "cauchy.constant_abs=1e-15"],
        dir.path(),
    );
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not preserved"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("cauchy.json")).unwrap()).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 1);
    assert_eq!(report["manifest"]["tolerances"]["cauchy.constant_abs"], 1e-15);
}

#[test]
fn csv_tables_follow_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&subheat(&["dist", "euclid2", "--x", "0,0", "--y", "3,4", "--y", "-1,0"], dir.path())), 0);
    let csv = fs::read_to_string(dir.path().join("dist.csv")).unwrap();
    let lines: Vec<&str> = csv.split("\r\n").collect();
    assert_eq!(lines[0], "x1,x2,y1,y2,upper,lower,converged");
    assert_eq!(lines.len(), 4);
    let upper: f64 = lines[1].split(',').nth(4).unwrap().parse().unwrap();
    assert!((upper - 5.0).abs() < 1e-6);

    assert_eq!(code(&subheat(&["kernel", "euclid2", "--t", "1,-1", "--y", "1,0"], dir.path())), 0);
    let csv = fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next().unwrap(), "t,x1,x2,y1,y2,value,abs_error,method");
    let v: f64 = rows.next().unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!((v - (-0.25f64).exp() / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
    assert!(rows.next().unwrap().starts_with("-1,0,0,1,0,0,"));
}

#[test]
fn reports_do_not_depend_on_threads_or_output_directory() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["verify", "metric", "grushin", "--seed", "11"];
    assert_eq!(code(&subheat(&args, a.path())), 0);
    let mut with_threads = args.to_vec();
    with_threads.extend(["--threads", "1"]);
    assert_eq!(code(&subheat(&with_threads, b.path())), 0);
    for f in ["verify-metric.json", "verify-metric.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let timing: serde_json::Value = serde_json::from_slice(&fs::read(b.path().join("verify-metric.timing.json")).unwrap()).unwrap();
    assert_eq!(timing["threads"], 1);
}
