//! State-detection histograms: dark- and bright-prepared shots read out by photon counting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifact::{RunArtifact, Table};
use super::config::{EfficiencyMode, ExperimentConfig, ResolvedConfig};
use crate::atom::{build_level_scheme, AtomSpecies, EmissionClass, LevelScheme, ManifoldId};
use crate::detection::{
    accumulate_histogram, bright_state_rates, calibrate_efficiency, calibrate_leak_weight, estimate_fidelity,
    finite_window_fidelity, register_counts, threshold_sweep, DetectionConfig, FidelityReport, Histogram, LeakModel,
};
use crate::dynamics::{CompiledTimeline, RateOptions};
use crate::error::Result;
use crate::field::{Interval, Timeline};
use crate::rng::derive_seed;

/// How the detector was set up for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub efficiency: f64,
    pub photon_rate_per_s: f64,
    /// Leak per emitted photon, zero when leak channels are off.
    pub q_effective: f64,
    /// Scalar weight applied to off-resonant pumping.
    pub off_resonant_weight: f64,
    /// Expected fidelities from the finite-window race model.
    pub expected_fidelity_dark: f64,
    pub expected_fidelity_bright: f64,
}

/// The full readout of one ¹⁷¹Yb⁺ qubit: a fluorescence trajectory through the detection
/// window followed by detector thinning and dark counts.
#[derive(Debug, Clone)]
pub struct DetectionChain {
    timeline: CompiledTimeline,
    pub detector: DetectionConfig,
    pub summary: ChainSummary,
    dark: ManifoldId,
    bright: ManifoldId,
}

impl DetectionChain {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let scheme = build_level_scheme(AtomSpecies::Yb171, cfg.constants.clone())?;
        Self::with_scheme(&scheme, cfg)
    }

    pub fn with_scheme(scheme: &LevelScheme, cfg: &ExperimentConfig) -> Result<Self> {
        let d = &cfg.detection;
        let window = cfg.detector.window_s;
        let kappa = d.dark_state_factor;
        let rates = bright_state_rates(scheme, &d.beams, kappa, window)?;
        let (weight, q_eff) = if d.leak_channels {
            let leak = LeakModel::calibrate(d.leak_calibration_efficiency, d.leak_calibration_fidelity, kappa < 1.0)?;
            (calibrate_leak_weight(&rates, &leak), leak.q_effective())
        } else {
            (0.0, 0.0)
        };
        let efficiency = match d.efficiency_mode {
            EfficiencyMode::Fixed => cfg.detector.efficiency,
            EfficiencyMode::Calibrated => {
                calibrate_efficiency(&cfg.detector, rates.photon_rate, q_eff, d.target_average_fidelity)?
            }
        };
        let detector = DetectionConfig { efficiency, ..cfg.detector };
        let (fd, fb) = finite_window_fidelity(&detector, rates.photon_rate, q_eff);
        let opts = RateOptions { kappa, off_resonant_weight: weight, ..Default::default() };
        let timeline = Timeline::new(vec![Interval::optical("detect", window, d.beams.clone()).with_dark_state_factor(kappa)]);
        let (dark, bright) = scheme.qubit_manifolds();
        Ok(Self {
            timeline: CompiledTimeline::new(scheme, &timeline, &opts)?,
            detector,
            summary: ChainSummary {
                efficiency,
                photon_rate_per_s: rates.photon_rate,
                q_effective: q_eff,
                off_resonant_weight: weight,
                expected_fidelity_dark: fd,
                expected_fidelity_bright: fb,
            },
            dark,
            bright,
        })
    }

    /// Registered counts for one shot with the ion projected into `|1⟩` when `bright`.
    pub fn counts(&self, bright: bool, seed: u64, shot: u64) -> u64 {
        let initial = if bright { self.bright } else { self.dark };
        let emitted = self.timeline.count_photons(initial, EmissionClass::Nm369, seed, shot);
        register_counts(emitted, &self.detector, seed, shot)
    }

    /// Counts for shots `0..n`, in shot order.
    pub fn many(&self, bright: bool, seed: u64, n: u64) -> Vec<u64> {
        (0..n).into_par_iter().map(|i| self.counts(bright, seed, i)).collect()
    }
}

fn histogram_table(name: &str, h: &Histogram) -> Table {
    let mut t = Table::new(name, &["count", "occurrences"]);
    let max = h.occurrences.keys().next_back().copied().unwrap_or(0);
    for k in 0..=max {
        t.push(vec![k.into(), h.occurrences.get(&k).copied().unwrap_or(0).into()]);
    }
    t
}

/// Dark (`|0⟩`) and bright (`|1⟩`) histograms with the fidelity at the configured threshold.
/// State preparation is ideal: `|1⟩` stands for `|0⟩` followed by a perfect π rotation.
pub fn run_detection(resolved: &ResolvedConfig) -> Result<RunArtifact> {
    let cfg = &resolved.config;
    let chain = DetectionChain::new(cfg)?;
    let dark_counts = chain.many(false, derive_seed(cfg.seed, 0), cfg.detection.shots_dark);
    let bright_counts = chain.many(true, derive_seed(cfg.seed, 1), cfg.detection.shots_bright);
    let dark = accumulate_histogram(&dark_counts);
    let bright = accumulate_histogram(&bright_counts);
    let report: FidelityReport = estimate_fidelity(&dark, &bright, &chain.detector)?;

    let mut art = RunArtifact::new("detection", resolved);
    art.tables.push(histogram_table("histogram_dark", &dark));
    art.tables.push(histogram_table("histogram_bright", &bright));
    let mut sweep = Table::new("threshold_sweep", &["threshold_counts", "fidelity_dark", "fidelity_bright", "fidelity_average"]);
    for r in threshold_sweep(&dark, &bright, &chain.detector, 10)? {
        sweep.push(vec![r.threshold.into(), r.fidelity_dark.into(), r.fidelity_bright.into(), r.average.into()]);
    }
    art.tables.push(sweep);
    art.documents.push(("fidelity".into(), serde_json::to_value(report)?));
    art.derived = json!({
        "fidelity_dark": report.fidelity_dark,
        "fidelity_bright": report.fidelity_bright,
        "fidelity_average": report.average,
        "fidelity_average_stderr": report.stderr_average,
        "efficiency": chain.summary.efficiency,
        "photon_rate_per_s": chain.summary.photon_rate_per_s,
        "q_effective": chain.summary.q_effective,
        "off_resonant_weight": chain.summary.off_resonant_weight,
        "expected_fidelity_dark": chain.summary.expected_fidelity_dark,
        "expected_fidelity_bright": chain.summary.expected_fidelity_bright,
        "mean_counts_dark": dark.mean(),
        "mean_counts_bright": bright.mean(),
    });
    Ok(art)
}
