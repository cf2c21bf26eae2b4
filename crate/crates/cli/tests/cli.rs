use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn logode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logode"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const L_PATH: &str = "t,x1,x2\n0,0,0\n1,1,0\n2,1,1\n";

fn rotation_field() -> Value {
    json!({
        "kind": "linear", "dim_v": 2, "dim_u": 2, "gamma": 10.0, "lip_norm": 1.0,
        "A": [[[0.0, -1.0], [1.0, 0.0]], [[0.2, 0.0], [0.0, -0.1]]],
        "b": [[0.0, 0.0], [0.0, 0.0]]
    })
}

#[test]
fn signature_of_l_path() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let o = logode(&["sig", "--path", s(&path), "--depth", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["levels"][0], json!([1.0, 1.0]));
    assert_eq!(v["levels"][1], json!([0.5, 1.0, 0.0, 0.5]));
}

#[test]
fn log_signature_of_l_path_has_half_area() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let o = logode(&["logsig", "--path", s(&path), "--depth", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["scalar"], json!(0.0));
    assert_eq!(v["levels"][1], json!([0.0, 0.5, -0.5, 0.0]));
}

#[test]
fn signature_over_subinterval() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let o = logode(&["sig", "--path", s(&path), "--depth", "1", "--from", "0.5", "--to", "1.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["levels"][0], json!([0.5, 0.5]));
}

#[test]
fn zigzag_two_variation() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "z.csv", "t,x1\n0,0\n1,1\n2,0\n3,1\n");
    let o = logode(&["pvar", "--path", s(&path), "--p", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "3");
}

#[test]
fn missing_field_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let o = logode(&["solve", "--path", s(&path), "--depth", "2", "--steps", "4", "--y0", "1,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("field is required"), "{}", stderr(&o));
}

#[test]
fn bad_csv_names_the_line() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "bad.csv", "t,x1\n0,0\n1,oops\n");
    let o = logode(&["sig", "--path", s(&path), "--depth", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--path") && err.contains("line 3"), "{err}");
}

#[test]
fn out_of_range_depth_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let o = logode(&["sig", "--path", s(&path), "--depth", "9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--depth"));
}

#[test]
fn help_and_version_exit_zero_unknown_flag_exits_one() {
    let o = logode(&["solve", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Field JSON"));
    assert_eq!(logode(&["--version"]).status.code(), Some(0));
    assert_eq!(logode(&["sig", "--bogus"]).status.code(), Some(1));
}

#[test]
fn signature_feeds_a_group_driver() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let first = write(dir.path(), "a.csv", "t,x1,x2\n0,0,0\n1,1,0\n");
    let second = write(dir.path(), "b.csv", "t,x1,x2\n1,1,0\n2,1,1\n");
    let sig = |p: &Path| -> Value {
        let o = logode(&["sig", "--path", s(p), "--depth", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_str(&stdout(&o)).unwrap()
    };
    let driver = json!({
        "depth": 3, "dim": 2,
        "increments": [sig(&first), sig(&second)],
        "controls": [1.0, 1.0]
    });
    let driver_file = write(dir.path(), "driver.json", &driver.to_string());
    let field_file = write(dir.path(), "field.json", &rotation_field().to_string());

    let run = |extra: &[&str]| -> Vec<Vec<f64>> {
        let mut args = vec!["solve", "--field", s(&field_file), "--steps", "2", "--y0", "1,-0.5"];
        args.extend_from_slice(extra);
        let o = logode(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,y1,y2"));
        lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let by_driver = run(&["--driver", s(&driver_file)]);
    let by_path = run(&["--path", s(&path), "--depth", "3"]);
    assert_eq!(by_driver.len(), 3);
    assert_eq!(by_path.len(), 3);
    assert_eq!(by_driver[2][0], 2.0);
    for (a, b) in by_driver.iter().zip(&by_path) {
        for k in 1..3 {
            assert!((a[k] - b[k]).abs() <= 1e-15, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn driver_depth_mismatch_is_reported() {
    let dir = TempDir::new().unwrap();
    let seg = write(dir.path(), "a.csv", "t,x1,x2\n0,0,0\n1,1,0\n");
    let o = logode(&["sig", "--path", s(&seg), "--depth", "2"]);
    let inc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let driver = json!({"depth": 2, "dim": 2, "increments": [inc], "controls": [1.0]});
    let driver_file = write(dir.path(), "driver.json", &driver.to_string());
    let field_file = write(dir.path(), "field.json", &rotation_field().to_string());
    let o = logode(&[
        "solve", "--driver", s(&driver_file), "--field", s(&field_file), "--depth", "3", "--steps", "1", "--y0", "1,0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--depth"));
}

#[test]
fn blow_up_exits_with_numerical_status() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "line.csv", "t,x1\n0,0\n1,1000\n");
    // dy = y^2 dx from y0 = 1 blows up at x = 1.
    let field = json!({
        "kind": "polynomial", "dim_v": 1, "dim_u": 1, "gamma": 10.0, "lip_norm": 1.0,
        "terms": [{"input": 0, "output": 0, "exponents": [2], "coeff": 1.0}]
    });
    let field_file = write(dir.path(), "field.json", &field.to_string());
    let o = logode(&[
        "solve", "--path", s(&path), "--field", s(&field_file), "--depth", "2", "--steps", "1", "--y0", "1",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn threshold_partition_solves() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let field_file = write(dir.path(), "field.json", &rotation_field().to_string());
    let out = dir.path().join("traj.csv");
    let o = logode(&[
        "solve", "--path", s(&path), "--field", s(&field_file), "--depth", "2", "--threshold", "0.25", "--y0", "1,0",
        "--scheme", "euler", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() >= 9, "{text}");
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 2.0);
}

#[test]
fn steps_and_threshold_are_exclusive() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "l.csv", L_PATH);
    let field_file = write(dir.path(), "field.json", &rotation_field().to_string());
    let o = logode(&[
        "solve", "--path", s(&path), "--field", s(&field_file), "--depth", "2", "--threshold", "0.25", "--steps", "3",
        "--y0", "1,0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn converge_writes_report() {
    let dir = TempDir::new().unwrap();
    let samples: String = (0..=64)
        .map(|i| {
            let t = i as f64 / 64.0;
            let a = std::f64::consts::TAU * t;
            format!("{t},{},{}\n", 0.3 * a.cos(), 0.3 * a.sin())
        })
        .collect();
    write(dir.path(), "circle.csv", &format!("t,x1,x2\n{samples}"));
    write(dir.path(), "field.json", &rotation_field().to_string());
    let cfg = json!({
        "field": "field.json", "path": "circle.csv", "scheme": "euler", "depth": 1,
        "meshes": [8, 16, 32, 64], "target_order": 1, "y0": [1.0, 0.5]
    });
    let cfg_file = write(dir.path(), "study.json", &cfg.to_string());
    let out = dir.path().join("report.csv");
    let o = logode(&["converge", "--config", s(&cfg_file), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("h,error,slope_running\n"));
    assert_eq!(text.lines().count(), 6, "{text}");
    assert!(text.lines().last().unwrap().contains("status=pass"), "{text}");
}

#[test]
fn dimsweep_writes_report() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "dims": [2, 4, 8], "family": "conjugated_nilpotent", "seed": 3,
        "path": {"times": [0.0, 0.5, 1.0], "points": [[0.0, 0.0], [0.4, 0.1], [0.3, 0.5]]},
        "scheme": "logode", "depth": 2, "steps": 8
    });
    let cfg_file = write(dir.path(), "sweep.json", &cfg.to_string());
    let o = logode(&["dimsweep", "--config", s(&cfg_file)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("dim,error\n"), "{text}");
    assert!(text.contains("# ratio="), "{text}");
}

#[test]
fn proptest_summary_is_json() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("summary.json");
    let o = logode(&["proptest", "--seed", "7", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["seed"], json!(7));
    assert_eq!(v["passed"], json!(true));
}
