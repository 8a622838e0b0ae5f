use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bikelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bikelab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", stderr(o)))
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn circle(dir: &TempDir, r: &str, n: &str) -> PathBuf {
    let p = path(dir, &format!("circle_{r}_{n}.json"));
    let o = bikelab(&["gen", "--kind", "circle", "--r", r, "--n", n, "--out", s(&p)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    p
}

fn points(v: &Value) -> Vec<Vec<f64>> {
    v["points"].as_array().unwrap().iter().map(|p| p.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()).collect()
}

#[test]
fn gen_writes_a_closed_curve_file() {
    let dir = TempDir::new().unwrap();
    let p = circle(&dir, "2", "512");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(v["dim"], 2);
    assert_eq!(v["closed"], true);
    let pts = points(&v);
    assert_eq!(pts.len(), 512);
    for q in &pts {
        assert!(((q[0] * q[0] + q[1] * q[1]).sqrt() - 2.0).abs() < 1e-12);
    }
}

#[test]
fn theorem_int_on_a_circle_passes_with_tiny_residuals() {
    let dir = TempDir::new().unwrap();
    let c = circle(&dir, "2", "512");
    let report = path(&dir, "report.json");
    let o = bikelab(&["verify", "theorem-int", "--curve", s(&c), "--l", "0.4", "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    // Gaps carry an upper limit; convergence orders carry a lower one.
    let gaps: Vec<&Value> = v["residuals"].as_array().unwrap().iter().filter(|r| r["limit"].get("at_most").is_some()).collect();
    assert!(gaps.len() >= 3);
    for r in gaps {
        assert!(r["value"].as_f64().unwrap() < 1e-8, "{r}");
    }
}

#[test]
fn long_bicycle_on_a_circle_has_elliptic_monodromy() {
    let dir = TempDir::new().unwrap();
    let c = circle(&dir, "2", "512");
    let o = bikelab(&["monodromy", "--curve", s(&c), "--lambda", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = stdout_json(&o);
    let class = v["class"].as_str().unwrap();
    assert!(class == "elliptic" || class == "identity", "{class}");
    // Sign analysis: 0 <= tr^2/det < 4 off the identity.
    let t = v["tr2_over_det"].as_f64().unwrap();
    assert!((0.0..4.0).contains(&t));
}

#[test]
fn monodromy_scan_is_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let c = circle(&dir, "1", "256");
    let args = ["monodromy", "--curve", s(&c), "--scan", "0.1:1.5:6"];
    let a = bikelab(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_bikelab")).args(args).env("BIKELAB_THREADS", "1").output().unwrap();
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout_json(&a).as_array().unwrap().len(), 6);
}

#[test]
fn seeded_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (r1, r2) = (path(&dir, "a.json"), path(&dir, "b.json"));
    for r in [&r1, &r2] {
        let o = bikelab(&["verify", "discrete-exactness", "--seed", "7", "--trials", "200", "--out", s(r)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
}

#[test]
fn usage_errors_exit_2_and_name_the_flag() {
    let dir = TempDir::new().unwrap();
    let c = circle(&dir, "2", "128");
    let cases: [(&[&str], &str); 5] = [
        (&["partner", "--curve", s(&c), "--l", "-1"], "--l"),
        (&["monodromy", "--curve", "does-not-exist.json", "--lambda", "1"], "--curve"),
        (&["scan-lambda", "--curve", s(&c), "--grid", "0.1:0.5"], "--grid"),
        (&["gen", "--kind", "fourier", "--n", "64"], "--seed"),
        (&["verify", "bisymp"], "--seed"),
    ];
    for (args, flag) in cases {
        let o = bikelab(args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(stderr(&o).contains(flag), "{args:?}: {}", stderr(&o));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_bikelab"))
        .args(["invariants", "--curve", s(&c)])
        .env("BIKELAB_THREADS", "none")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("BIKELAB_THREADS"));
    assert_eq!(code(&bikelab(&["no-such-command"])), 2);
}

#[test]
fn failed_check_exits_1() {
    let dir = TempDir::new().unwrap();
    let e = path(&dir, "ellipse.json");
    assert_eq!(code(&bikelab(&["gen", "--kind", "ellipse", "--a", "2", "--b", "1", "--n", "512", "--out", s(&e)])), 0);
    let o = bikelab(&["verify", "zindler", "--curve", s(&e), "--l", "1"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert_eq!(stdout_json(&o)["pass"], false);
}

#[test]
fn invariants_of_an_offset_unit_circle() {
    let dir = TempDir::new().unwrap();
    let c = path(&dir, "u.json");
    assert_eq!(code(&bikelab(&["gen", "--kind", "circle", "--r", "1", "--center", "2,0", "--n", "256", "--out", s(&c)])), 0);
    let v = stdout_json(&bikelab(&["invariants", "--curve", s(&c)]));
    let tau = std::f64::consts::TAU;
    assert!((v["F1"].as_f64().unwrap() - tau).abs() < 1e-9);
    assert!((v["A"][0][1].as_f64().unwrap() - tau).abs() < 1e-9);
    assert!(v["J"][0].as_f64().unwrap().abs() < 1e-9);
    assert!((v["J"][1].as_f64().unwrap() + tau).abs() < 1e-9);
}

#[test]
fn scan_lambda_writes_one_csv_row_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let c = circle(&dir, "2", "512");
    let o = bikelab(&["scan-lambda", "--curve", s(&c), "--grid", "0.05:0.8:4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    assert_eq!(r.headers().unwrap(), vec!["lambda", "tr2_over_det", "I"]);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let l: f64 = row[0].parse().unwrap();
        let i: f64 = row[2].parse().unwrap();
        let exact = 4.0 * std::f64::consts::PI * (1.0 - l * l / 4.0).sqrt();
        assert!((i - exact).abs() < 1e-6, "lambda {l}: {i} vs {exact}");
    }
}

#[test]
fn flow_log_has_the_documented_columns() {
    let dir = TempDir::new().unwrap();
    let k = path(&dir, "knot.json");
    let log = path(&dir, "log.csv");
    let out = path(&dir, "final.json");
    assert_eq!(code(&bikelab(&["gen", "--kind", "torus-knot", "--n", "256", "--out", s(&k)])), 0);
    let o = bikelab(&["flow", "--curve", s(&k), "--field", "filament", "--dt", "1e-3", "--steps", "5", "--log", s(&log), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_path(&log).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["step", "t", "F1", "F2", "F3", "F4", "F5", "A12", "A13", "A23", "J1", "J2", "J3"]);
    assert_eq!(r.records().count(), 6);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(points(&v).len(), 256);
}

#[test]
fn discrete_transform_closes_from_the_default_start() {
    let dir = TempDir::new().unwrap();
    let p = circle(&dir, "1", "12");
    let o = bikelab(&["discrete-transform", "--polygon", s(&p), "--d", "0.3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = stdout_json(&o);
    assert!(v["closure_defect"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["monodromy"]["classification"]["class"], "hyperbolic");
    assert!(v["monodromy"]["fit"]["residual"].as_f64().unwrap() < 1e-8);
    let q = points(&v["polygon"]);
    let pv = points(&serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap());
    for (a, b) in pv.iter().zip(&q) {
        assert!(((a[0] - b[0]).hypot(a[1] - b[1]) - 0.3).abs() < 1e-12);
    }
}

#[test]
fn partner_chords_have_twice_the_bicycle_length() {
    let dir = TempDir::new().unwrap();
    let c = circle(&dir, "2", "256");
    let svg = path(&dir, "pair.svg");
    let o = bikelab(&["partner", "--curve", s(&c), "--l", "0.5", "--plot", s(&svg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let q = points(&stdout_json(&o));
    let p = points(&serde_json::from_str(&std::fs::read_to_string(&c).unwrap()).unwrap());
    assert_eq!(q.len(), p.len());
    for (a, b) in p.iter().zip(&q) {
        assert!(((a[0] - b[0]).hypot(a[1] - b[1]) - 1.0).abs() < 1e-8);
    }
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn plot_marks_the_cusps_of_a_cusped_rear_track() {
    let dir = TempDir::new().unwrap();
    let e = path(&dir, "ellipse.json");
    let svg = path(&dir, "e.svg");
    assert_eq!(code(&bikelab(&["gen", "--kind", "ellipse", "--a", "2", "--b", "1", "--n", "512", "--out", s(&e)])), 0);
    let o = bikelab(&["plot", "--curve", s(&e), "--l", "1.3", "--partner", "--out", s(&svg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<path").count(), 3);
    assert_eq!(text.matches("<circle").count(), 4);
}
