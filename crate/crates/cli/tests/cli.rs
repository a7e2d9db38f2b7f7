use std::path::Path;
use std::process::{Command, Output};

fn ybsim(args: &[&str], out_env: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ybsim")).args(args).env("YBSIM_OUT_DIR", out_env).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_config_accepts_a_good_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("good.cfg");
    std::fs::write(&cfg, "seed = 7\n[rabi]\nshots_per_point = 200\n").unwrap();
    let o = ybsim(&["validate-config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok "));
}

#[test]
fn validate_config_without_a_file_checks_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = ybsim(&["validate-config"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_one_with_a_prefixed_message() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.cfg", "[rabi]\nshots_per_pint = 10\n"),
        ("zero.cfg", "[rabi]\nshots_per_point = 0\n"),
        ("syntax.cfg", "seed = = 3\n"),
    ];
    for (name, body) in cases {
        let cfg = dir.path().join(name);
        std::fs::write(&cfg, body).unwrap();
        let o = ybsim(&["validate-config", cfg.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert!(stderr(&o).starts_with("error[config]:"), "{name}: {}", stderr(&o));
    }
    let o = ybsim(&["validate-config", dir.path().join("missing.cfg").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = ybsim(&["calibrate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[config]:"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn branching_with_fixed_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("appA.cfg");
    std::fs::write(&cfg, "[branching]\nrepetitions = 20000\n").unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = ybsim(&["branching", "--config", cfg.to_str().unwrap(), "--seed", "42", "--out", out.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for table in ["decay_traces", "decay_fits", "replications"] {
        let x = std::fs::read(a.join(format!("{table}.csv"))).unwrap();
        let y = std::fs::read(b.join(format!("{table}.csv"))).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{table}.csv differs between runs");
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("decay_fits.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
}

#[test]
fn detect_writes_both_histograms_and_the_fidelity_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig6.cfg");
    std::fs::write(&cfg, "scenario = \"detection\"\n").unwrap();
    let out = dir.path().join("det");
    let o = ybsim(&["detect", "--config", cfg.to_str().unwrap(), "--shots", "300", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["histogram_dark.csv", "histogram_bright.csv", "fidelity.json", "histogram_dark.meta.json", "resolved_config.toml"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("fidelity.json")).unwrap()).unwrap();
    let avg = report["average"].as_f64().expect("average fidelity");
    assert!(avg > 0.9 && avg <= 1.0);
    let csv = std::fs::read_to_string(out.join("histogram_dark.csv")).unwrap();
    assert!(csv.starts_with("count,occurrences\n"));
}

#[test]
fn scenario_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.cfg");
    std::fs::write(&cfg, "scenario = \"ramsey\"\n").unwrap();
    let o = ybsim(&["hyperfine", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_resonance_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("narrow.cfg");
    std::fs::write(&cfg, "[hyperfine]\nrf_scan_hz = { start = 3.5e9, stop = 4.0e9, step = 1e6 }\n").unwrap();
    let o = ybsim(&["hyperfine", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[runtime]:"), "{}", stderr(&o));
}

#[test]
fn default_output_directory_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = ybsim(&["rabi", "--shots", "20", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("rabi").join("rabi.json").exists());
}
