use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcfifo")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn method<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["methods"].as_array().unwrap().iter().find(|m| m["method"] == name).unwrap()
}

#[test]
fn bounds_for_presets() {
    let s1 = json(&["bounds", "--preset", "s1"]);
    assert_eq!(s1["utilization"]["rho"], "4/5");
    assert_eq!(method(&s1, "improved")["delay"]["value"], "11/100");
    assert_eq!(method(&s1, "direct")["delay"]["status"], "not_applicable");

    let s2 = json(&["bounds", "--config", configs().join("s2.toml").to_str().unwrap()]);
    assert_eq!(method(&s2, "improved")["delay"]["value"], "1/5");
    assert_eq!(method(&s2, "direct")["delay"]["value"], "1/5");

    let text = stdout(&run(&["bounds", "--preset", "s1", "--method", "improved"]));
    assert!(text.contains("11/100"));
    assert!(!text.contains("method direct"));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = \"bad\"\n[[class]]\ncapacity = 0\nrate = 1\nburst = 1\nmax_packet = 2\n").unwrap();
    let out = run(&["bounds", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error:"), "{err}");

    let out = run(&["bounds", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_modes() {
    let greedy = stdout(&run(&["generate", "--preset", "s1", "--mode", "greedy", "--tagged", "2"]));
    let last = greedy.lines().last().unwrap();
    assert!(last.starts_with("0,2,"), "{last}");

    let a = stdout(&run(&["generate", "--preset", "s1", "--seed", "7", "--horizon", "0.5"]));
    let b = stdout(&run(&["generate", "--preset", "s1", "--seed", "7", "--horizon", "0.5"]));
    let c = stdout(&run(&["generate", "--preset", "s1", "--seed", "8", "--horizon", "0.5"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.lines().count() > 100);

    let empty = stdout(&run(&["generate", "--preset", "s1", "--intensity", "0"]));
    let rows: Vec<_> = empty.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["arrival,class,length"]);

    assert_eq!(run(&["generate", "--preset", "s1", "--intensity", "1.5"]).status.code(), Some(2));
}

#[test]
fn simulate_two_packets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sched.csv");
    let cfg = configs().join("two_packet.toml");
    let trace = configs().join("two_packet.csv");
    let summary = json(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(summary["max_delay"], "2");
    let sched = fs::read_to_string(&out).unwrap();
    assert_eq!(sched, "arrival,class,length,departure,delay\n0,1,10,1,1\n0,2,100,2,2\n");
    assert!(dir.path().join("sched.backlog.csv").exists());
}

#[test]
fn verify_accepts_simulation_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("greedy.csv");
    let sched = dir.path().join("sched.csv");
    let (t, s) = (trace.to_str().unwrap(), sched.to_str().unwrap());
    assert!(run(&["generate", "--preset", "s1", "--mode", "greedy", "--out", t]).status.success());
    assert!(run(&["simulate", "--preset", "s1", "--trace", t, "--out", s]).status.success());

    let ok = run(&["verify", "--preset", "s1", "--trace", t, "--schedule", s]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));

    // hold the last packet far past the delay bound
    let text = fs::read_to_string(&sched).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines.pop().unwrap().split(',').map(String::from).collect();
    cols[3] = "1000".into();
    lines.push(cols.join(","));
    fs::write(&sched, lines.join("\n") + "\n").unwrap();
    let bad = run(&["verify", "--preset", "s1", "--trace", t, "--schedule", s, "--check", "delay,backlog"]);
    assert_eq!(bad.status.code(), Some(1), "{}", stdout(&bad));
    let conf = run(&["verify", "--preset", "s1", "--trace", t, "--schedule", s, "--check", "conformance"]);
    assert_eq!(conf.status.code(), Some(0), "{}", stdout(&conf));
}

#[test]
fn sweep_small() {
    let report = json(&["sweep", "--preset", "s1", "--seeds", "3", "--seed", "5", "--horizon", "0.2"]);
    let seeds: Vec<_> = report["seeds"].as_array().unwrap().iter().map(|s| s["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, [5, 6, 7]);
    assert_eq!(report["failed_seeds"].as_array().unwrap().len(), 0);
}
