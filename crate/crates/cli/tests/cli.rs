use std::f64::consts::PI;
use std::process::Command as Process;

use residue_lab::oracles::{beta_ball, beta_sphere};
use residue_lab_cli::*;

fn config(args: &[&str]) -> Result<RunConfig, CliError> {
    let mut full = vec!["residue-lab"];
    full.extend_from_slice(args);
    RunConfig::from_args(&clap::Parser::try_parse_from(full).unwrap())
}

fn run(args: &[&str]) -> Result<String, CliError> {
    execute(&config(args)?)
}

fn column(csv: &str, row: usize, col: usize) -> String {
    csv.lines().nth(row + 1).unwrap().split(',').nth(col).unwrap().to_string()
}

fn value(csv: &str, row: usize, col: usize) -> f64 {
    column(csv, row, col).parse().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

const CIRCLE: &str = r#"{"kind": "circle"}"#;

#[test]
fn circle_values() {
    let out = run(&["--cmd", "beta", "--shape", CIRCLE, "--z", "1,0,-0.5"]).unwrap();
    assert_eq!(out.lines().next().unwrap(), "z,re,im,method,residue");
    assert!(rel(value(&out, 0, 1), 16.0 * PI) < 1e-8);
    assert!(rel(value(&out, 1, 1), 4.0 * PI * PI) < 1e-8);
    let want = beta_sphere(2, num_complex::Complex64::new(-0.5, 0.0)).unwrap().re;
    assert!(rel(value(&out, 2, 1), want) < 1e-6);
    assert_eq!(column(&out, 0, 3), "profile");
    // seventeen significant digits
    let re = column(&out, 0, 1);
    assert_eq!(re.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn ball_and_sphere_values() {
    let out = run(&["--cmd", "beta", "--shape", r#"{"kind": "ball", "params": {"n": 3}}"#, "--z", "0"]).unwrap();
    assert!(rel(value(&out, 0, 1), (4.0 * PI / 3.0f64).powi(2)) < 1e-8);
    assert_eq!(column(&out, 0, 3), "boundary-reduction");
    let out = run(&["--cmd", "beta", "--shape", r#"{"kind": "sphere", "params": {"m": 2}}"#, "--z", "2"]).unwrap();
    let want = beta_sphere(3, num_complex::Complex64::new(2.0, 0.0)).unwrap().re;
    assert!(rel(value(&out, 0, 1), want) < 1e-6);
    let out = run(&["--cmd", "beta", "--shape", r#"{"kind": "ball", "params": {"n": 2}}"#, "--z", "1.5", "--format", "report"]).unwrap();
    let want = beta_ball(2, num_complex::Complex64::new(1.5, 0.0)).unwrap().re;
    let re: f64 = out.split_whitespace().find_map(|t| t.strip_prefix("re=")).unwrap().parse().unwrap();
    assert!(rel(re, want) < 1e-6);
}

#[test]
fn poles_become_residue_rows() {
    let out = run(&["--cmd", "beta", "--shape", CIRCLE, "--z", "-1"]).unwrap();
    assert_eq!(column(&out, 0, 1), "");
    assert_eq!(column(&out, 0, 3), "profile-pole");
    assert!(rel(value(&out, 0, 4), 4.0 * PI) < 1e-6);
    let sq = r#"{"kind": "polygon_knot", "vertices": [[0,0,0],[1,0,0],[1,1,0],[0,1,0]]}"#;
    let out = run(&["--cmd", "beta", "--shape", sq, "--z", "0,-1"]).unwrap();
    assert!((value(&out, 0, 1) - 16.0).abs() < 1e-10);
    assert!((value(&out, 1, 4) - 8.0).abs() < 1e-12);
}

#[test]
fn residues_command() {
    let out = run(&["--cmd", "residues", "--shape", r#"{"kind": "torus", "params": {"R": 2, "r": 1}}"#]).unwrap();
    assert_eq!(out.lines().next().unwrap(), "pole,weight,value,method,error");
    let rows: Vec<Vec<String>> = out.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    let find = |pole: &str, method: &str| -> f64 {
        rows.iter().find(|r| r[0].starts_with(pole) && r[1] == "one" && r[3] == method).unwrap()[2].parse().unwrap()
    };
    assert!(rel(find("-2.0", "profile"), find("-2.0", "curvature")) < 1e-2);
    assert!(rel(find("-4.0", "profile"), find("-4.0", "curvature")) < 1e-2);
    let rep = run(&["--cmd", "residues", "--shape", r#"{"kind": "ball", "params": {"n": 3}}"#, "--format", "report"]).unwrap();
    assert!(rep.lines().any(|l| l == "body=true"));
}

#[test]
fn gw_command() {
    let out = run(&["--cmd", "gw", "--shape", r#"{"kind": "sphere", "params": {"m": 4}}"#, "--format", "report"]).unwrap();
    let gw: f64 = out.lines().find_map(|l| l.strip_prefix("gw=")).unwrap().parse().unwrap();
    assert!(rel(gw, PI * PI) < 1e-8);
    let out = run(&["--cmd", "gw", "--shape", r#"{"kind": "spheroid", "params": {"a": 1.5}}"#]).unwrap();
    assert!(value(&out, 0, 6).abs() < 1e-6 * value(&out, 0, 0));
    let e = run(&["--cmd", "gw", "--shape", CIRCLE]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn sweep_rows() {
    let out = run(&["--cmd", "sweep", "--sweep", "0.9:1.1:0.1"]).unwrap();
    assert_eq!(out.lines().next().unwrap(), "a,gw,r8,r8_nu");
    assert_eq!(out.lines().count(), 4);
    assert!((value(&out, 1, 0) - 1.0).abs() < 1e-12);
    assert!(rel(value(&out, 1, 1), PI * PI) < 1e-10);
    assert!(value(&out, 1, 2).abs() < 1e-10);
    assert!(rel(value(&out, 1, 3), 2.0 * PI.powi(4) / 3.0) < 1e-8);
    assert!(value(&out, 0, 1) > value(&out, 1, 1) && value(&out, 2, 1) > value(&out, 1, 1));
}

#[test]
fn output_is_deterministic_and_independent_of_workers() {
    let args = ["--cmd", "beta", "--shape", r#"{"kind": "ellipse", "params": {"a": 1, "b": 1.4}}"#, "--z", "0.5,-0.3"];
    let a = run(&args).unwrap();
    assert_eq!(a, run(&args).unwrap());
    let mut four = args.to_vec();
    four.extend(["--workers", "4"]);
    let b = run(&four).unwrap();
    for row in 0..2 {
        let (x, y) = (value(&a, row, 1), value(&b, row, 1));
        assert!((x - y).abs() < 1e-12 * x.abs());
    }
}

#[test]
fn configuration_errors() {
    for args in [
        vec!["--cmd", "beta", "--shape", CIRCLE],
        vec!["--cmd", "beta", "--z", "1"],
        vec!["--cmd", "beta", "--shape", r#"{"kind": "blob"}"#, "--z", "1"],
        vec!["--cmd", "beta", "--shape", r#"{"kind": "circle", "colour": 1}"#, "--z", "1"],
        vec!["--cmd", "beta", "--shape", CIRCLE, "--z", "1", "--weight", "heavy"],
        vec!["--cmd", "beta", "--shape", CIRCLE, "--z", "1", "--order", "2"],
        vec!["--cmd", "sweep", "--sweep", "3:1:0.1"],
        vec!["--cmd", "sweep", "--sweep", "1:2"],
        vec!["--cmd", "beta", "--shape", "/nonexistent.json", "--z", "1"],
    ] {
        let e = config(&args).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{args:?}");
    }
}

#[test]
fn reach_violation_is_a_numeric_failure() {
    let e = run(&["--cmd", "beta", "--shape", r#"{"kind": "torus", "params": {"R": 2, "r": 0.5}}"#, "--z", "1", "--delta", "3"]).unwrap_err();
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_residue-lab");
    let ok = Process::new(bin).args(["--cmd", "beta", "--shape", CIRCLE, "--z", "0"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8(ok.stdout).unwrap().starts_with("z,re,im"));
    let bad = Process::new(bin).args(["--cmd", "beta", "--shape", CIRCLE, "--bogus", "1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = Process::new(bin).args(["--cmd", "beta", "--shape", CIRCLE, "--z", "0", "--workers", "0"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let env = Process::new(bin).args(["--cmd", "beta", "--shape", CIRCLE, "--z", "0"]).env("RESIDUE_LAB_WORKERS", "0").output().unwrap();
    assert_eq!(env.status.code(), Some(2));
    let dir = std::env::temp_dir().join(format!("residue-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let shape = dir.join("circle.json");
    std::fs::write(&shape, CIRCLE).unwrap();
    let out = dir.join("out.csv");
    let st = Process::new(bin)
        .args(["--cmd", "beta", "--z", "1", "--shape", shape.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("z,re,im"));
    std::fs::remove_dir_all(&dir).unwrap();
}
