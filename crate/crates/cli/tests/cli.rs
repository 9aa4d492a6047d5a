use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
seed = 5
[generate]
n_households = 1200
n_lgas = 50
n_states = 8
[dominance]
replicates = 100
";

fn quantmig(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("small.toml");
    if !config.exists() {
        fs::write(&config, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_quantmig"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_all_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = quantmig(a.path(), &["run-all"]);
    let rb = quantmig(b.path(), &["run-all"]);
    assert_eq!(code(&ra), 0, "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(code(&rb), 0);
    assert!(stdout(&ra).contains("prediction: "));
    let ma = fs::read_to_string(a.path().join("manifest.csv")).unwrap();
    let mb = fs::read_to_string(b.path().join("manifest.csv")).unwrap();
    assert_eq!(ma, mb);
    for name in ["table4.csv", "figure6.csv", "table6.csv", "table7.csv", "table3.csv"] {
        assert!(ma.lines().any(|l| l.starts_with(&format!("{name},"))), "{name}");
    }
}

#[test]
fn steps_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&quantmig(d, &["generate"])), 0);
    let s1 = quantmig(d, &["step1"]);
    assert_eq!(code(&s1), 0);
    assert!(stdout(&s1).starts_with("welfare model"));
    let s2 = quantmig(d, &["step2"]);
    assert_eq!(code(&s2), 0);
    assert!(stdout(&s2).contains("prediction:"));
    for step in ["step3", "step4", "attrition"] {
        let o = quantmig(d, &[step]);
        assert_eq!(code(&o), 0, "{step}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(d.join("qm_prediction.txt").exists());
}

#[test]
fn step2_needs_step1_output() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&quantmig(dir.path(), &["generate"])), 0);
    let o = quantmig(dir.path(), &["step2"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn missing_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = quantmig(dir.path(), &["step1", "--input", "/nonexistent/panel.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_config_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_quantmig"))
        .args(["run-all", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn estimation_failure_is_exit_3() {
    // Only one household lives in a conflict-free area: too few rows for the
    // welfare model.
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("tiny.csv");
    let mut text = String::from("household_id,wave,lga_id,state_id,weight,pcexp,hhsize,conflict\n");
    text.push_str("1,1,1,1,1,100,3,0\n1,2,1,1,1,110,3,0\n");
    for h in 2..6 {
        text.push_str(&format!("{h},1,2,1,1,90,{h},1\n{h},2,2,1,1,80,{h},1\n"));
    }
    fs::write(&panel, text).unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, "[welfare]\nterms = [\"hhsize\", \"fe:state_id\"]\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_quantmig"))
        .arg("step1")
        .arg("--config")
        .arg(&cfg)
        .arg("--input")
        .arg(&panel)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dwelling_switch_and_unweighted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&quantmig(d, &["generate"])), 0);
    assert_eq!(code(&quantmig(d, &["step1", "--no-dwelling", "--unweighted"])), 0);
    let table = fs::read_to_string(d.join("table4.csv")).unwrap();
    assert!(!table.contains("dwel_"));
    assert!(table.contains("own_tv"));
}

#[test]
fn bad_arguments_are_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&quantmig(dir.path(), &["run-all", "--seed", "minus-one"])), 2);
    assert_eq!(code(&quantmig(dir.path(), &["step9"])), 2);
}
