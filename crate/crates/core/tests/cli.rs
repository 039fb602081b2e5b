//! End-to-end runs of the `memsyn` binary.

use std::path::Path;
use std::process::{Command, Output};

use memsyn::analysis::loop_area;
use memsyn::io::csv::{parse_csv, samples_from};
use memsyn::simulator::{SimConfig, Trace, TraceMeta};

fn memsyn(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memsyn"));
    cmd.args(args).env_remove("MEMSYN_SEED");
    if let Some(s) = env_seed {
        cmd.env("MEMSYN_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn seed_line(stdout: &[u8]) -> String {
    String::from_utf8_lossy(stdout).lines().find(|l| l.starts_with("# seed:")).unwrap_or_default().to_string()
}

#[test]
fn no_arguments_is_usage_error() {
    let out = memsyn(&[], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(memsyn(&["bogus"], None).status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"experiment": {"kind": "stdp", "delta_tee": [1e-6]}}"#);
    let out = memsyn(&["stdp", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("delta_tee"), "{err}");
}

#[test]
fn mismatched_experiment_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"experiment": {"kind": "sweep"}}"#);
    assert_eq!(memsyn(&["stdp", "--config", &cfg], None).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("no_such_dir").join("o.csv");
    let out = memsyn(&["stdp", "--out", out_path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"experiment": {"kind": "stdp", "delta_t": [-10e-6, 10e-6]}}"#);
    let run = || {
        let out = memsyn(&["stdp", "--config", &cfg, "--seed", "7"], None);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let (a, b) = (run(), run());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn seed_precedence_flag_config_env() {
    let dir = tempfile::tempdir().unwrap();
    let with_seed = write(dir.path(), "s.json", r#"{"sim": {"seed": 11}, "experiment": {"kind": "stdp", "delta_t": [5e-6]}}"#);
    let without = write(dir.path(), "n.json", r#"{"experiment": {"kind": "stdp", "delta_t": [5e-6]}}"#);
    let run = |cfg: &str, flag: Option<&str>, env: Option<&str>| {
        let mut args = vec!["stdp", "--config", cfg];
        if let Some(f) = flag {
            args.extend(["--seed", f]);
        }
        let out = memsyn(&args, env);
        assert_eq!(out.status.code(), Some(0));
        seed_line(&out.stdout)
    };
    assert_eq!(run(&with_seed, Some("5"), Some("9")), "# seed: 5");
    assert_eq!(run(&with_seed, None, Some("9")), "# seed: 11");
    assert_eq!(run(&without, None, Some("9")), "# seed: 9");
    assert_eq!(run(&without, None, None), "# seed: 0");
}

#[test]
fn bad_env_seed_is_config_error() {
    let out = memsyn(&["stdp"], Some("not-a-number"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_csv_shows_hysteresis_and_window() {
    let out = memsyn(&["sweep", "--seed", "3"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = parse_csv(&text).unwrap();
    assert!(parsed.comments.iter().any(|c| c.starts_with("config: {")));
    let samples = samples_from(&parsed).unwrap();
    let trace = Trace { samples, meta: TraceMeta { params_hash: String::new(), seed: 3, config: SimConfig::dc() } };
    assert!(loop_area(&trace) > 0.0);

    // the up-ramp crosses 0.1 V in HRS, the down-ramp after SET in LRS
    let at_read: Vec<f64> =
        trace.samples.iter().filter(|s| (s.v_applied - 0.1).abs() < 1e-12).map(|s| s.v_applied / s.i).collect();
    assert!(at_read.len() >= 2, "{at_read:?}");
    let ratio = at_read[0] / at_read[1];
    assert!((11.0..=44.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn json_format_is_structured() {
    let out = memsyn(&["multilevel", "--format", "json"], None);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["kind"], "multilevel");
    let levels = doc["result"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
}
