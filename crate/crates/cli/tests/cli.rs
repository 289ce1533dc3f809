use std::path::Path;
use std::process::{Command, Output};

use nirs_core::io::{write_processed_csv, RawLog};
use nirs_core::wire::FRAME_LEN;
use nirs_core::{process_pipeline, Simulation, SimulationConfig};

fn twin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nirs-twin"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = twin(&["simulate", "--duration", "200", "--seed", "7", "--out", name], dir.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("a/raw.bin")).unwrap();
    let b = std::fs::read(dir.path().join("b/raw.bin")).unwrap();
    assert_eq!(a, b);
    let log = RawLog::parse(a).unwrap();
    assert_eq!(log.frame_bytes.len(), 200_000 * FRAME_LEN);
    assert_eq!(
        std::fs::read(dir.path().join("a/truth.csv")).unwrap(),
        std::fs::read(dir.path().join("b/truth.csv")).unwrap()
    );

    let other = twin(&["simulate", "--duration", "5", "--seed", "8", "--out", "c"], dir.path());
    assert_eq!(code(&other), 0);
    let c = RawLog::read(&dir.path().join("c/raw.bin")).unwrap();
    assert_eq!(c.frame_bytes.len(), 5_000 * FRAME_LEN);
}

#[test]
fn simulate_then_process_matches_the_in_memory_path() {
    let dir = tempfile::tempdir().unwrap();
    let protocol = "baseline:20,task:30,rest:20";
    let out = twin(&["simulate", "--seed", "3", "--protocol", protocol, "--age", "40", "--out", "rec"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = twin(&["process", "rec/raw.bin", "--out", "proc"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("processed 70000 frames"));

    let config = SimulationConfig {
        seed: 3,
        age_years: 40.0,
        protocol: protocol.parse::<nirs_core::physio::protocol::ProtocolTimeline>().unwrap().phases().to_vec(),
        ..SimulationConfig::default()
    };
    let mut sim = Simulation::new(config).unwrap();
    let frames = sim.run_protocol().unwrap();
    let output = process_pipeline(&frames, sim.layout(), sim.optics(), &sim.pipeline_config(), &sim.markers()).unwrap();
    let mut expected = Vec::new();
    write_processed_csv(&mut expected, &output.hemo).unwrap();
    assert_eq!(std::fs::read(dir.path().join("proc/processed.csv")).unwrap(), expected);
    for name in ["markers.csv", "heart_rate.csv"] {
        assert!(dir.path().join("proc").join(name).exists(), "{name}");
    }
}

#[test]
fn process_of_a_missing_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = twin(&["process", "missing-file.bin"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing-file.bin"));
}

#[test]
fn usage_errors_exit_two_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out = twin(&["frobnicate"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    for args in [
        &["simulate", "--duration", "1", "--bogus"][..],
        &["simulate", "--protocol", "baseline:20,nap:5", "--out", "x"],
        &["simulate", "--seed", "minus-one", "--out", "x"],
        &["serve", "--port", "99999"],
    ] {
        let out = twin(args, dir.path());
        assert_eq!(code(&out), 2, "{args:?}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0, "usage errors left files behind");
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = twin(&["selftest"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn bench_reports_at_least_real_time_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let out = twin(&["bench", "--duration", "30"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rate: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("throughput: "))
        .and_then(|l| l.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .expect("throughput line");
    assert!(rate >= 1000.0, "{rate} frames/s");
}

#[test]
fn replay_runs_a_log_through_a_session() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&twin(&["simulate", "--duration", "10", "--seed", "4", "--out", "rec"], dir.path())), 0);
    let out = twin(&["replay", "rec/raw.bin", "--port", "0", "--speed", "0", "--out", "rep"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("replayed 10000 frames"));
    let a = RawLog::read(&dir.path().join("rec/raw.bin")).unwrap();
    let b = RawLog::read(&dir.path().join("rep/raw.bin")).unwrap();
    assert_eq!(a.frame_bytes, b.frame_bytes);
    assert!(dir.path().join("rep/processed.csv").exists());
}
