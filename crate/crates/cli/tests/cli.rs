use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SINGLE: &str = r#"
[instance]
[[instance.nodes]]
id = 1
c = 1.0
x_min = 0.0
x_max = 10.0
demand = 4.0
"#;

const TWO_NODE: &str = r#"
[instance]
[[instance.nodes]]
id = 1
b = 2.0
c = 0.1
alpha = 0.01
x_min = 0.0
x_max = 10.0
demand = 5.0

[[instance.nodes]]
id = 2
b = 1.0
c = 0.2
alpha = 0.02
x_min = 0.0
x_max = 10.0
demand = 5.0

[topology]
edges = [[1, 2]]

[sim]
k = 2.0
T = 0.01
horizon = 10.0
"#;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn edp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edp")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn check_accepts_a_feasible_instance() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "two.toml", TWO_NODE);
    let out = edp(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("assumptions: pass"));
    assert!(text.contains("\nfeasible"));
}

#[test]
fn check_flags_an_infeasible_instance() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "over.toml", &TWO_NODE.replace("demand = 5.0", "demand = 10.0"));
    let out = edp(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("demand exceeds"));
}

#[test]
fn check_rejects_a_broken_file() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "bad.toml", &TWO_NODE.replace("c = 0.2", "c = -0.2"));
    let out = edp(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("strictly convex"), "{err}");

    let out = edp(&["check", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_prints_the_closed_form_price() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "single.toml", SINGLE);
    let out = edp(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lam: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("lambda*: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((lam - 8.0).abs() < 1e-8, "{lam}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn solve_reports_infeasibility() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "over.toml", &SINGLE.replace("demand = 4.0", "demand = 40.0"));
    assert_eq!(edp(&["solve", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn simulate_writes_a_trace_and_summary() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "two.toml", TWO_NODE);
    let csv = dir.path().join("trace.csv");
    let out = edp(&[
        "simulate",
        path.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--summary",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(&csv).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next(),
        Some("t,node,lambda,x_hat,grad,mismatch,cost,lyapunov,disagreement")
    );
    // one row per node per instant, instants at 0 and every 0.01 s up to 10 s
    assert_eq!(lines.count(), 2 * 1001);
    let text = stdout(&out);
    assert!(text.contains("classification: converged"), "{text}");
    assert!(text.contains("|mean lambda - lambda*|"));
}

#[test]
fn simulate_classifies_the_bundled_event_scenario() {
    let out = edp(&["simulate", data("ieee30_s1_s4.toml").to_str().unwrap(), "--summary"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("segment 3 [20, 30]: diverging_up"), "{text}");
    assert!(text.contains("classification: converged"), "{text}");
}

#[test]
fn simulate_overrides_gain_and_sampling() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "two.toml", TWO_NODE);
    let out = edp(&[
        "simulate",
        path.to_str().unwrap(),
        "--summary",
        "--gain",
        "10000",
        "--sampling",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(
        stdout(&out).contains("numerical divergence: non-finite"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn sweep_prints_one_row_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "two.toml", TWO_NODE);
    let out = edp(&[
        "sweep",
        path.to_str().unwrap(),
        "--gain",
        "1,4",
        "--sampling",
        "0.01,0.02",
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "k,T,final_t,mismatch,disagreement,classification,instability");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("1,0.01,"));
    assert!(rows[4].starts_with("4,0.02,"));
    assert!(rows[1..].iter().all(|r| r.ends_with("converged,none")), "{text}");
}
