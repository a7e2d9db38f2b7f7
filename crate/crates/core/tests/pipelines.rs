use ybsim::error::Error;
use ybsim::experiments::artifact::verify_config_hash;
use ybsim::experiments::{self, OutputFormat, ResolvedConfig, RunArtifact, Scenario};

fn resolved(toml: &str) -> ResolvedConfig {
    ResolvedConfig::from_toml_str(toml).unwrap()
}

fn csvs(art: &RunArtifact) -> Vec<(String, String)> {
    art.tables.iter().map(|t| (t.name.clone(), t.to_csv())).collect()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

const SMALL_RAMSEY: &str = "[ramsey]\ndelays_s = [0.0, 1.0, 2.0]\nshots_per_point = 200\ndelta_t_s = { start = 0.0, stop = 8e-4, step = 4e-5 }\n";
const SMALL_RABI: &str = "[rabi]\nshots_per_point = 150\ndurations_s = { start = 0.0, stop = 15e-6, step = 1e-6 }\n";

#[test]
fn reruns_reproduce_tables_byte_for_byte() {
    for (scenario, toml) in [(Scenario::Ramsey, SMALL_RAMSEY), (Scenario::Rabi, SMALL_RABI)] {
        let r = resolved(toml);
        let a = experiments::run(scenario, &r).unwrap();
        let b = experiments::run(scenario, &r).unwrap();
        assert_eq!(csvs(&a), csvs(&b), "{scenario:?}");
    }
}

#[test]
fn tables_do_not_depend_on_thread_count() {
    let det = "[detection]\nshots_dark = 400\nshots_bright = 400\n";
    for (scenario, toml) in [(Scenario::Ramsey, SMALL_RAMSEY), (Scenario::Detection, det)] {
        let r = resolved(toml);
        let one = in_pool(1, || experiments::run(scenario, &r).unwrap());
        let three = in_pool(3, || experiments::run(scenario, &r).unwrap());
        assert_eq!(csvs(&one), csvs(&three), "{scenario:?}");
        assert_eq!(one.documents, three.documents);
    }
}

#[test]
fn different_seeds_give_different_shots() {
    let a = experiments::run(Scenario::Ramsey, &resolved(&format!("seed = 1\n{SMALL_RAMSEY}"))).unwrap();
    let b = experiments::run(Scenario::Ramsey, &resolved(&format!("seed = 2\n{SMALL_RAMSEY}"))).unwrap();
    assert_ne!(csvs(&a), csvs(&b));
}

#[test]
fn every_table_gets_metadata_matching_the_stored_config() {
    let r = resolved(SMALL_RABI);
    let art = experiments::run(Scenario::Rabi, &r).unwrap();
    let dir = tempfile::tempdir().unwrap();
    art.write(dir.path(), OutputFormat::Csv).unwrap();
    for t in &art.tables {
        assert!(dir.path().join(format!("{}.csv", t.name)).exists());
        assert!(verify_config_hash(dir.path(), &t.name).unwrap(), "{}", t.name);
    }
    // tampering with the stored config breaks the check
    let path = dir.path().join("resolved_config.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("seed = ", "seed = 1", 1)).unwrap();
    assert!(!verify_config_hash(dir.path(), "rabi").unwrap());
}

#[test]
fn json_output_carries_the_same_rows() {
    let art = experiments::run(Scenario::Rabi, &resolved(SMALL_RABI)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    art.write(dir.path(), OutputFormat::Json).unwrap();
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rabi.json")).unwrap()).unwrap();
    let table = art.table("rabi").unwrap();
    assert_eq!(rows.as_array().unwrap().len(), table.rows.len());
    assert_eq!(rows[3]["shots"], 150);
}

#[test]
fn rabi_at_zero_duration_shows_only_the_dark_error() {
    let r = resolved("[rabi]\nshots_per_point = 2000\ndurations_s = { start = 0.0, stop = 15e-6, step = 1e-6 }\n");
    let art = experiments::run(Scenario::Rabi, &r).unwrap();
    let p1 = art.table("rabi").unwrap().column("p1").unwrap();
    let chain = experiments::detection::DetectionChain::new(&r.config).unwrap();
    let dark_error = 1.0 - chain.summary.expected_fidelity_dark;
    let se = (dark_error * (1.0 - dark_error) / 2000.0).sqrt();
    assert!((p1[0] - dark_error).abs() < 4.0 * se + 1e-3, "p1(0) = {}, dark error {dark_error}", p1[0]);
}

#[test]
fn noiseless_detection_is_perfect() {
    let r = resolved(
        "[detector]\ndark_rate_per_s = 0.0\nefficiency = 0.05\n[detection]\nleak_channels = false\nefficiency_mode = \"fixed\"\nshots_dark = 2000\nshots_bright = 300\n",
    );
    let art = experiments::run(Scenario::Detection, &r).unwrap();
    assert_eq!(art.derived_f64("fidelity_dark").unwrap(), 1.0);
    assert!(art.derived_f64("fidelity_bright").unwrap() > 0.999);
}

#[test]
fn scan_that_misses_the_resonances_reports_coverage() {
    let r = resolved("[hyperfine]\nrf_scan_hz = { start = 3.5e9, stop = 4.5e9, step = 2e6 }\n");
    match experiments::run(Scenario::Hyperfine, &r) {
        Err(Error::ScanCoverage(_)) => {}
        other => panic!("expected a coverage error, got {other:?}"),
    }
}

#[test]
fn branching_needs_three_powers() {
    let err = ResolvedConfig::from_toml_str("[branching]\npowers_w = [1e-6, 2e-6]\n").unwrap_err();
    assert!(err.is_config());
}
