//! End-to-end checks of the command-line surface: exit codes, output file
//! determinism, and the documented input formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn omr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_omr"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("omr-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process exited")
}

const SMALL_CONF: &str = "\
horizon = 6
dimension = 2
epsilon = 0.25
gamma_bar = 0.5
seller = sum
environment = tracker
buyers = truthful,shade:0.1
seed = 9
replications = 2
grid_step = 0.5
max_support = 1
support_window = 2
opt_resolution = 0.01
";

#[test]
fn simulate_writes_deterministic_outputs() {
    let dir = tmp_dir("sim");
    let conf = dir.join("exp.conf");
    write(&conf, SMALL_CONF);

    let run = |out: &str| {
        let out_dir = dir.join(out);
        let output = omr()
            .args(["simulate", "--config"])
            .arg(&conf)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
        (
            std::fs::read(out_dir.join("trace.csv")).unwrap(),
            std::fs::read(out_dir.join("summary.json")).unwrap(),
        )
    };
    let (trace_a, summary_a) = run("a");
    let (trace_b, summary_b) = run("b");
    // byte-for-byte identical across runs
    assert_eq!(trace_a, trace_b);
    assert_eq!(summary_a, summary_b);

    let trace_text = String::from_utf8(trace_a).unwrap();
    assert_eq!(trace_text.lines().count(), 7); // header + one row per round
    let summary_text = String::from_utf8(summary_a).unwrap();
    assert!(summary_text.contains("\"kind\": \"profile-gap\""));
    assert!(summary_text.contains("\"surrogate_error_bound\""));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_seed_flag_changes_outputs() {
    let dir = tmp_dir("seed");
    let conf = dir.join("exp.conf");
    write(&conf, SMALL_CONF);
    let run = |seed: &str, out: &str| {
        let out_dir = dir.join(out);
        let output = omr()
            .args(["simulate", "--config"])
            .arg(&conf)
            .args(["--seed", seed, "--out-dir"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&output), 0);
        std::fs::read(out_dir.join("trace.csv")).unwrap()
    };
    assert_ne!(run("1", "s1"), run("2", "s2"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_configs_exit_2() {
    let dir = tmp_dir("bad");
    // the robust seller's approximation regime caps epsilon at 1/4
    let conf = dir.join("eps.conf");
    write(&conf, &SMALL_CONF.replace("epsilon = 0.25", "epsilon = 0.6"));
    let output = omr().args(["simulate", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(code(&output), 2, "{}", String::from_utf8_lossy(&output.stderr));

    // unknown keys are rejected, not ignored
    let conf = dir.join("key.conf");
    write(&conf, &format!("{SMALL_CONF}mystery = 1\n"));
    let output = omr().args(["simulate", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(code(&output), 2);

    // missing config file
    let output = omr()
        .args(["simulate", "--config"])
        .arg(dir.join("nope.conf"))
        .output()
        .unwrap();
    assert_eq!(code(&output), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn enumeration_cap_exits_3() {
    let dir = tmp_dir("cap");
    let conf = dir.join("exp.conf");
    // full standard family at this horizon dwarfs any practical cap
    write(
        &conf,
        &SMALL_CONF
            .replace("grid_step = 0.5\nmax_support = 1\nsupport_window = 2\n", "")
            .replace("horizon = 6", "horizon = 64"),
    );
    let output = omr().args(["simulate", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(code(&output), 3, "{}", String::from_utf8_lossy(&output.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_dispatches_and_rejects_unknown_ids() {
    let output = omr()
        .args([
            "verify",
            "random-pricing",
            "--theta",
            "0.8",
            "--bid",
            "0.5",
            "--samples",
            "200000",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("0.045"), "expected the closed-form value in {text}");
    assert!(text.contains("\"passed\": true"));

    let output = omr().args(["verify", "no-such-check"]).output().unwrap();
    assert_eq!(code(&output), 2);
}

#[test]
fn sketch_command_builds_and_rejects_mismatches() {
    let dir = tmp_dir("sketch");
    let weights = dir.join("w.csv");
    let contexts = dir.join("x.csv");
    // zero weight: empty sketch
    write(&weights, "0.0\n0.5\n");
    write(&contexts, "1.0\n1.0\n1.0\n1.0\n");
    let out = dir.join("sketches.json");
    let output = omr()
        .args(["sketch", "--weights"])
        .arg(&weights)
        .arg("--contexts")
        .arg(&contexts)
        .args(["--epsilon", "0.5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    let entries = parsed.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    // zero target sketches to nothing; the half target takes the worked
    // twelve-update path
    assert_eq!(entries[0]["updates"], 0);
    assert_eq!(entries[1]["updates"], 12);

    // mismatched dimensions exit 2
    write(&weights, "0.5;0.5\n");
    let output = omr()
        .args(["sketch", "--weights"])
        .arg(&weights)
        .arg("--contexts")
        .arg(&contexts)
        .args(["--epsilon", "0.5"])
        .output()
        .unwrap();
    assert_eq!(code(&output), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn enumerate_counts_and_lists() {
    let output = omr()
        .args([
            "enumerate-experts",
            "--horizon",
            "2",
            "--epsilon",
            "0.5",
            "--grid-step",
            "2.0",
            "--max-support",
            "2",
            "--count-only",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&output), 0);
    let text = String::from_utf8(output.stdout).unwrap();
    // grid {-2, 0, 2}: 1 + 2*3 + 9 = 16
    assert!(text.contains("family size: 16"), "{text}");

    // listing past the cap exits 3
    let output = omr()
        .args([
            "enumerate-experts",
            "--horizon",
            "20",
            "--epsilon",
            "0.5",
            "--cap",
            "1000",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&output), 3);
}

#[test]
fn out_dir_env_variable_is_honored() {
    let dir = tmp_dir("env");
    let conf = dir.join("exp.conf");
    write(&conf, SMALL_CONF);
    let out_dir = dir.join("from-env");
    let output = omr()
        .args(["simulate", "--config"])
        .arg(&conf)
        .env("OMR_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out_dir.join("trace.csv").exists());
    assert!(out_dir.join("summary.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}
