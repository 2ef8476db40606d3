//! Exit-code and output contract of the CLI.

use std::path::Path;
use std::process::{Command, Output};

fn fairsign() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairsign"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = fairsign().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "expected success for {args:?}: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn exit_code(args: &[&str]) -> i32 {
    fairsign()
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("no signal")
}

#[test]
fn honest_run_exits_zero_with_a_three_message_transcript() {
    let output = run_ok(&["run", "--a", "HONEST", "--b", "HONEST", "--seed", "1"]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("EM1 A->B"));
    assert!(stdout.contains("EM2 B->A"));
    assert!(stdout.contains("EM3 A->B"));
    assert!(!stdout.contains("DRM1"));
    assert!(stdout.contains("fairness: HOLDS"));
}

#[test]
fn dispute_run_shows_the_dispute_transcript() {
    let output = run_ok(&["run", "--a", "A_NO_EM3", "--b", "HONEST"]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    for label in ["DRM1 B->TTP", "DRM2 TTP->A", "DRM3 TTP->B"] {
        assert!(stdout.contains(label), "missing {label} in:\n{stdout}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(exit_code(&["run", "--a", "BOGUS", "--b", "HONEST"]), 2);
    assert_eq!(exit_code(&["run", "--a", "HONEST"]), 2);
    // A responder strategy on the initiator side.
    assert_eq!(exit_code(&["run", "--a", "B_BAD_EM2", "--b", "HONEST"]), 2);
    assert_eq!(exit_code(&["nonsense"]), 2);
    assert_eq!(
        exit_code(&["keygen", "--bits", "128", "--out", "/tmp/x.key"]),
        2
    );
}

#[test]
fn matrix_is_fair_and_the_negative_control_is_not() {
    assert_eq!(exit_code(&["matrix"]), 0);

    let output = fairsign()
        .args(["matrix", "--broken-ttp"])
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(
        stderr.contains("B_BAD_EM2"),
        "violation must name the scenario:\n{stderr}"
    );
}

#[test]
fn matrix_records_are_byte_identical_across_runs() {
    let first = run_ok(&["matrix", "--records", "--seed", "1"]);
    let second = run_ok(&["matrix", "--records", "--seed", "1"]);
    assert!(!first.stdout.is_empty());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stdout.iter().filter(|&&b| b == b'\n').count(), 18);
}

#[test]
fn seed_env_var_is_the_default() {
    let output = fairsign()
        .args(["run", "--a", "HONEST", "--b", "HONEST"])
        .env("FAIRSIGN_SEED", "9")
        .output()
        .expect("binary runs");
    assert!(output.status.success());
    assert!(String::from_utf8(output.stdout).unwrap().contains("seed=9"));
}

#[test]
fn metrics_match_the_published_row() {
    let output = run_ok(&["metrics"]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert_eq!(stdout.matches("yes").count(), 4, "{stdout}");
    assert!(!stdout.contains("MISMATCH"));

    // Option (i) deviates on the dispute cell and exits 1.
    let output = fairsign()
        .args(["metrics", "--ttp-option", "i"])
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("MISMATCH"));
    assert!(stdout.contains("option (i)"));

    // Honest-only runs leave the dispute cells unmeasured.
    let output = run_ok(&["metrics", "--runs", "honest"]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("not-measured"));
}

#[test]
fn keygen_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.key");
    let second = dir.path().join("second.key");
    run_ok(&[
        "keygen",
        "--bits",
        "512",
        "--seed",
        "5",
        "--out",
        path(&first),
    ]);
    run_ok(&[
        "keygen",
        "--bits",
        "512",
        "--seed",
        "5",
        "--out",
        path(&second),
    ]);
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );

    let pair = fairsign_core::keyfile::read_keypair(&first).unwrap();
    let public = fairsign_core::keyfile::read_public_key(&first.with_extension("pub")).unwrap();
    assert_eq!(pair.public, public);
    assert_eq!(pair.modulus_bits(), 512);
}

#[test]
fn scenario_config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.conf");
    std::fs::write(
        &config,
        "strategy_a = A_BAD_EM3\nstrategy_b = HONEST\nseed = 3\n",
    )
    .unwrap();
    let output = run_ok(&["run", "--config", path(&config)]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("A=A_BAD_EM3"));
    assert!(stdout.contains("seed=3"));
    assert!(stdout.contains("DRM3 TTP->B"));

    // --a/--b cannot be combined with --config.
    assert_eq!(
        exit_code(&["run", "--config", path(&config), "--a", "HONEST"]),
        2
    );
}

#[test]
fn empty_matrix_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("matrix.conf");
    std::fs::write(&config, "a_strategies =\n").unwrap();
    assert_eq!(exit_code(&["matrix", "--config", path(&config)]), 2);

    // A restricted but non-empty matrix runs fine.
    std::fs::write(
        &config,
        "a_strategies = HONEST, A_NO_EM3\nb_strategies = HONEST\n",
    )
    .unwrap();
    let output = run_ok(&["matrix", "--config", path(&config), "--records"]);
    assert_eq!(output.stdout.iter().filter(|&&b| b == b'\n').count(), 2);
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}
