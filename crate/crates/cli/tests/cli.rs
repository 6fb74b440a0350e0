//! The binary end to end: outputs, overrides and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn small(&self, lambda: f64) -> PathBuf {
        let text = format!(
            r#"{{"seed": 5, "n_events": 20000, "output_dir": "unused", "source": {{"mean_photons": {lambda}}}}}"#
        );
        self.config(&format!("small_{lambda}.json"), &text)
    }
}

fn run(args: &[&str], config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snspd-pnr"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn table(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn configuration_errors_exit_with_two() {
    let ws = Workspace::new();
    let out = ws.path("out");
    let bad_json = ws.config("bad.json", "{ not json");
    assert_eq!(code(&run(&["stats"], &bad_json, &out, &[])), 2);
    let unknown = ws.config("unknown.json", r#"{"seed": 1, "n_events": 10, "output_dir": "x", "colour": 1}"#);
    assert_eq!(code(&run(&["simulate"], &unknown, &out, &[])), 2);
    assert_eq!(code(&run(&["stats"], &ws.small(1.0), &out, &["--threads", "0"])), 2);
    assert_eq!(code(&run(&["analyze"], &ws.small(1.0), &out, &["--level", "-0.5"])), 2);
}

#[test]
fn io_errors_exit_with_three() {
    let ws = Workspace::new();
    let missing = ws.path("nowhere.json");
    assert_eq!(code(&run(&["stats"], &missing, &ws.path("out"), &[])), 3);
    let file = ws.config("plain_file", "");
    assert_eq!(code(&run(&["stats"], &ws.small(1.0), &file.join("sub"), &[])), 3);
}

#[test]
fn a_dark_source_exits_with_four() {
    let ws = Workspace::new();
    let o = run(&["simulate"], &ws.small(0.0), &ws.path("out"), &[]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unit_efficiency_column_is_the_complement_of_collisions() {
    let ws = Workspace::new();
    let out = ws.path("out");
    let o = run(&["stats"], &ws.small(1.0), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = fs::read_to_string(out.join("all_detected.csv")).unwrap();
    assert!(header.starts_with("q,") && header.lines().next().unwrap().ends_with(",eta_1"));
    let all = table(&out.join("all_detected.csv"));
    let coll = table(&out.join("collision.csv"));
    assert_eq!(all.len(), coll.len());
    for (a, c) in all.iter().zip(&coll) {
        assert_eq!(a[0], c[0]);
        assert!((a.last().unwrap() - (1.0 - c[1])).abs() < 1e-12, "q {}", a[0]);
    }
    for name in ["click_probability.csv", "resolution.csv"] {
        assert!(fs::metadata(out.join(name)).unwrap().len() > 0);
    }
}

#[test]
fn outputs_depend_on_the_seed_and_nothing_else() {
    let ws = Workspace::new();
    let cfg = ws.small(1.98);
    let (a, b, c) = (ws.path("a"), ws.path("b"), ws.path("c"));
    assert!(run(&["simulate"], &cfg, &a, &[]).status.success());
    assert!(run(&["simulate"], &cfg, &b, &["--threads", "3"]).status.success());
    assert!(run(&["simulate"], &cfg, &c, &["--seed", "6"]).status.success());
    for f in ["waveforms.snwf", "ground_truth.csv"] {
        let (x, y, z) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), fs::read(c.join(f)).unwrap());
        assert_eq!(x, y, "{f}");
        assert_ne!(x, z, "{f}");
    }
}

#[test]
fn analyze_honours_an_explicit_level() {
    let ws = Workspace::new();
    let out = ws.path("out");
    let o = run(&["analyze"], &ws.small(1.98), &out, &["--level", "0.55"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["level_volts"], 0.55);
    for name in ["per_k.csv", "histogram.csv", "confusion.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn sweep_marks_exactly_one_optimal_level() {
    let ws = Workspace::new();
    let out = ws.path("out");
    let o = run(&["sweep"], &ws.small(1.98), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let optimal = summary.lines().skip(1).filter(|l| l.split(',').nth(8) == Some("true")).count();
    assert_eq!(optimal, 1, "{summary}");
    assert!(fs::metadata(out.join("waterfall.csv")).unwrap().len() > 0);
}
