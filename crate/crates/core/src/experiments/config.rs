//! Scenario configuration: shipped defaults merged with a user TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atom::{MagneticEnvironment, PhysicalConstants};
use crate::detection::DetectionConfig;
use crate::error::{Error, Result};
use crate::field::{DrivenBeam, LaserBeam, WavelengthClass};

pub const DEFAULTS_TOML: &str = include_str!("../../data/defaults.toml");
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Detection,
    Rabi,
    Branching,
    Hyperfine,
    Ramsey,
}

impl Scenario {
    pub fn id(self) -> &'static str {
        match self {
            Scenario::Detection => "detection",
            Scenario::Rabi => "rabi",
            Scenario::Branching => "branching",
            Scenario::Hyperfine => "hyperfine",
            Scenario::Ramsey => "ramsey",
        }
    }
}

/// Uniform grid `start, start + step, …` up to and including `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.step > 0.0 && self.stop >= self.start && self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::constraint(name, "grid needs step > 0 and stop >= start"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyMode {
    Calibrated,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionModel {
    /// Born-rule projection read out without error.
    Ideal,
    /// Photon-counting simulation of the detection window.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Ode,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    CoherenceTime,
    Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionScenario {
    pub shots_dark: u64,
    pub shots_bright: u64,
    pub dark_state_factor: f64,
    pub leak_channels: bool,
    pub efficiency_mode: EfficiencyMode,
    pub target_average_fidelity: f64,
    pub leak_calibration_efficiency: f64,
    pub leak_calibration_fidelity: f64,
    pub beams: Vec<DrivenBeam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiScenario {
    pub pi_time_s: f64,
    pub durations_s: Grid,
    pub shots_per_point: u64,
    pub detection: DetectionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingScenario {
    pub p_sat_w: f64,
    pub powers_w: Vec<f64>,
    pub repump_interval_s: f64,
    pub collect_interval_s: f64,
    pub bin_width_s: f64,
    pub repetitions: u64,
    pub efficiency: f64,
    pub dark_rate_per_s: f64,
    pub power_error_fraction: f64,
    pub power_jitter_fraction: f64,
    pub engine: Engine,
    pub replications: u64,
    pub probe: LaserBeam,
    pub repump: LaserBeam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperfineScenario {
    pub rf_scan_hz: Grid,
    pub stage1_carrier_detuning_hz: f64,
    pub stage2_carrier_detuning_hz: f64,
    pub repump_power_w: f64,
    pub repump_p_sat_w: f64,
    pub repump_waist_m: f64,
    pub sideband_fraction: f64,
    pub stage1_dwell_s: f64,
    pub stage2_dwell_s: f64,
    pub efficiency: f64,
    pub count_noise: bool,
    pub cooling: DrivenBeam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyScenario {
    pub pi_time_s: f64,
    pub delays_s: Vec<f64>,
    pub delta_t_s: Grid,
    pub shots_per_point: u64,
    pub noise_model: NoiseModel,
    pub coherence_time_s: f64,
    pub detection: DetectionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePrepScenario {
    pub duration_s: f64,
    pub samples: usize,
    pub pump: DrivenBeam,
    pub repump: DrivenBeam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub constants: PhysicalConstants,
    pub environment: MagneticEnvironment,
    pub detector: DetectionConfig,
    pub detection: DetectionScenario,
    pub rabi: RabiScenario,
    pub branching: BranchingScenario,
    pub hyperfine: HyperfineScenario,
    pub ramsey: RamseyScenario,
    pub state_prep: StatePrepScenario,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::constraint(name, format!("must be > 0, got {v}")))
    }
}

fn nonzero(name: &str, v: u64) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::constraint(name, "must be > 0"))
    }
}

fn check_beam(name: &str, b: &LaserBeam, wavelength: WavelengthClass) -> Result<()> {
    b.validate(name)?;
    if b.wavelength != wavelength {
        return Err(Error::constraint(format!("{name}.wavelength"), "wrong wavelength class for this beam"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Defaults only.
    pub fn defaults() -> Self {
        ResolvedConfig::from_toml_str("").expect("shipped defaults are valid").config
    }

    /// Every invariant; the first violation is reported with its field path.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::constraint("schema_version", format!("expected {SCHEMA_VERSION}")));
        }
        self.constants.validate()?;
        self.environment.validate()?;
        self.detector.validate()?;

        let d = &self.detection;
        nonzero("detection.shots_dark", d.shots_dark)?;
        nonzero("detection.shots_bright", d.shots_bright)?;
        if !(d.dark_state_factor > 0.0 && d.dark_state_factor <= 1.0) {
            return Err(Error::constraint("detection.dark_state_factor", "must lie in (0, 1]"));
        }
        for (name, v) in [
            ("detection.target_average_fidelity", d.target_average_fidelity),
            ("detection.leak_calibration_fidelity", d.leak_calibration_fidelity),
            ("detection.leak_calibration_efficiency", d.leak_calibration_efficiency),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::constraint(name, "must lie in (0, 1)"));
            }
        }
        if d.beams.is_empty() {
            return Err(Error::constraint("detection.beams", "at least one beam is required"));
        }
        for (i, b) in d.beams.iter().enumerate() {
            b.validate(&format!("detection.beams[{i}]"))?;
        }

        let r = &self.rabi;
        positive("rabi.pi_time_s", r.pi_time_s)?;
        r.durations_s.validate("rabi.durations_s")?;
        if r.durations_s.start < 0.0 {
            return Err(Error::constraint("rabi.durations_s", "durations must be >= 0"));
        }
        nonzero("rabi.shots_per_point", r.shots_per_point)?;

        let b = &self.branching;
        positive("branching.p_sat_w", b.p_sat_w)?;
        if b.powers_w.len() < 3 {
            return Err(Error::constraint("branching.powers_w", "at least 3 powers are required"));
        }
        if b.powers_w.windows(2).any(|w| !(w[1] > w[0])) || !(b.powers_w[0] > 0.0) {
            return Err(Error::constraint("branching.powers_w", "must be positive and strictly increasing"));
        }
        positive("branching.repump_interval_s", b.repump_interval_s)?;
        positive("branching.collect_interval_s", b.collect_interval_s)?;
        positive("branching.bin_width_s", b.bin_width_s)?;
        if b.bin_width_s > b.collect_interval_s / 4.0 {
            return Err(Error::constraint("branching.bin_width_s", "need at least 4 bins per collection interval"));
        }
        nonzero("branching.repetitions", b.repetitions)?;
        nonzero("branching.replications", b.replications)?;
        if !(b.efficiency > 0.0 && b.efficiency <= 1.0) {
            return Err(Error::constraint("branching.efficiency", "must lie in (0, 1]"));
        }
        if !(b.dark_rate_per_s >= 0.0) {
            return Err(Error::constraint("branching.dark_rate_per_s", "must be >= 0"));
        }
        positive("branching.power_error_fraction", b.power_error_fraction)?;
        if !(0.0..0.5).contains(&b.power_jitter_fraction) {
            return Err(Error::constraint("branching.power_jitter_fraction", "must lie in [0, 0.5)"));
        }
        check_beam("branching.probe", &b.probe, WavelengthClass::Nm369)?;
        check_beam("branching.repump", &b.repump, WavelengthClass::Nm935)?;

        let h = &self.hyperfine;
        h.rf_scan_hz.validate("hyperfine.rf_scan_hz")?;
        positive("hyperfine.repump_power_w", h.repump_power_w)?;
        positive("hyperfine.repump_p_sat_w", h.repump_p_sat_w)?;
        positive("hyperfine.repump_waist_m", h.repump_waist_m)?;
        positive("hyperfine.stage1_dwell_s", h.stage1_dwell_s)?;
        positive("hyperfine.stage2_dwell_s", h.stage2_dwell_s)?;
        if !(h.sideband_fraction > 0.0 && h.sideband_fraction < 0.5) {
            return Err(Error::constraint("hyperfine.sideband_fraction", "must lie in (0, 0.5)"));
        }
        if !(h.efficiency > 0.0 && h.efficiency <= 1.0) {
            return Err(Error::constraint("hyperfine.efficiency", "must lie in (0, 1]"));
        }
        h.cooling.validate("hyperfine.cooling")?;

        let m = &self.ramsey;
        positive("ramsey.pi_time_s", m.pi_time_s)?;
        if m.delays_s.is_empty() || m.delays_s.windows(2).any(|w| !(w[1] > w[0])) || m.delays_s[0] < 0.0 {
            return Err(Error::constraint("ramsey.delays_s", "must be non-empty, >= 0 and strictly increasing"));
        }
        m.delta_t_s.validate("ramsey.delta_t_s")?;
        nonzero("ramsey.shots_per_point", m.shots_per_point)?;
        positive("ramsey.coherence_time_s", m.coherence_time_s)?;

        let s = &self.state_prep;
        positive("state_prep.duration_s", s.duration_s)?;
        if s.samples == 0 {
            return Err(Error::constraint("state_prep.samples", "must be > 0"));
        }
        s.pump.validate("state_prep.pump")?;
        s.repump.validate("state_prep.repump")?;
        Ok(())
    }
}

/// Recursively overlays `over` onto `base`. Tables merge key by key; any other value,
/// arrays included, replaces the base value.
pub fn merge_toml(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_toml(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Command-line overrides applied after merging.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
}

/// A validated configuration together with its canonical TOML text and hash.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub resolved_toml: String,
    pub hash: String,
}

pub fn config_hash(resolved_toml: &str) -> String {
    hex::encode(Sha256::digest(resolved_toml.as_bytes()))
}

impl ResolvedConfig {
    pub fn from_toml_str(user: &str) -> Result<Self> {
        Self::with_overrides(user, Overrides::default())
    }

    pub fn with_overrides(user: &str, overrides: Overrides) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(DEFAULTS_TOML).map_err(|e| Error::Config(format!("defaults: {e}")))?;
        let user_table: toml::Table = toml::from_str(user).map_err(|e| Error::Config(e.to_string()))?;
        merge_toml(&mut table, user_table);
        let mut config: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(shots) = overrides.shots {
            config.detection.shots_dark = shots;
            config.detection.shots_bright = shots;
            config.rabi.shots_per_point = shots;
            config.ramsey.shots_per_point = shots;
            config.branching.repetitions = shots;
        }
        config.validate()?;
        Self::from_config(config)
    }

    pub fn from_config(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let resolved_toml = toml::to_string(&config).map_err(|e| Error::Config(e.to_string()))?;
        let hash = config_hash(&resolved_toml);
        Ok(Self { config, resolved_toml, hash })
    }

    pub fn load(path: &Path, overrides: Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::with_overrides(&text, overrides)
    }
}
