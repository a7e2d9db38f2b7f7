//! Hyperfine splittings of ³D[3/2]₁/₂ and ²D₃/₂ from 935 nm sideband scans.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde_json::json;

use super::artifact::{float_array, RunArtifact, Table};
use super::config::{HyperfineScenario, ResolvedConfig};
use crate::analysis::{find_peaks, least_squares, DataSeries, Peak, PeakSet};
use crate::atom::{build_level_scheme, AtomSpecies, EmissionClass, LevelScheme, Term};
use crate::dynamics::{build_rate_matrix, steady_state, PopulationVector, Propagator, RateMatrix, RateOptions};
use crate::error::{Error, Result};
use crate::field::{DrivenBeam, LaserBeam, Modulator, WavelengthClass};
use crate::rng::{derive_seed, stream, Domain};

/// Width of the moving average applied before peak search.
const SMOOTHING_POINTS: f64 = 5.0;

fn repump(h: &HyperfineScenario, carrier_hz: f64, rf_hz: f64) -> DrivenBeam {
    let f = h.sideband_fraction;
    DrivenBeam::new(LaserBeam {
        wavelength: WavelengthClass::Nm935,
        carrier_detuning_hz: carrier_hz,
        power_w: h.repump_power_w,
        waist_m: h.repump_waist_m,
        p_sat_w: h.repump_p_sat_w,
        enabled: true,
    })
    .with_modulator(Modulator::new(rf_hz, &[(-1, f), (0, 1.0 - 2.0 * f), (1, f)]))
}

fn fluorescence(m: &RateMatrix, p: &[f64]) -> f64 {
    m.transitions.iter().filter(|t| t.emits() == Some(EmissionClass::Nm369)).map(|t| t.rate * p[t.from.0]).sum()
}

fn matrix(scheme: &LevelScheme, h: &HyperfineScenario, carrier_hz: f64, rf_hz: f64) -> RateMatrix {
    build_rate_matrix(scheme, &[h.cooling.clone(), repump(h, carrier_hz, rf_hz)], &RateOptions::default())
}

/// Expected detected counts per dwell with the carrier far off resonance: steady-state
/// fluorescence while the first-order sideband is scanned.
pub fn stage1_signal(scheme: &LevelScheme, h: &HyperfineScenario, rf: &[f64]) -> Result<Vec<f64>> {
    rf.par_iter()
        .map(|&f| {
            let m = matrix(scheme, h, h.stage1_carrier_detuning_hz, f);
            let p = steady_state(&m)?;
            Ok(fluorescence(&m, &p.0) * h.stage1_dwell_s * h.efficiency)
        })
        .collect()
}

/// Expected detected counts per dwell for an ion starting in ²D₃/₂ F=2, with the carrier
/// holding F=1 repumped while the sideband is scanned.
pub fn stage2_signal(scheme: &LevelScheme, h: &HyperfineScenario, rf: &[f64]) -> Result<Vec<f64>> {
    let d2 = scheme.find(Term::D32, 4).ok_or_else(|| Error::constraint("species", "needs the D3/2 F=2 manifold"))?;
    let p0 = PopulationVector::pure(scheme.len(), d2.0);
    rf.par_iter()
        .map(|&f| {
            let m = matrix(scheme, h, h.stage2_carrier_detuning_hz, f);
            let integral = Propagator::new(&m, h.stage2_dwell_s)?.integrate(&p0);
            Ok(fluorescence(&m, &integral) * h.efficiency)
        })
        .collect()
}

fn with_noise(mean: &[f64], on: bool, seed: u64) -> Vec<f64> {
    if !on {
        return mean.to_vec();
    }
    let mut rng = stream(seed, Domain::CountNoise, 0);
    mean.iter()
        .map(|&m| if m > 0.0 { Poisson::new(m).expect("positive mean").sample(&mut rng) } else { 0.0 })
        .collect()
}

/// Peaks whose prominence exceeds five standard deviations of the smoothed count noise at
/// their own height.
fn locate(rf: &[f64], counts: &[f64]) -> Result<PeakSet> {
    let sd = |level: f64| (level.max(1.0) / SMOOTHING_POINTS).sqrt();
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = 5.0 * sd(sorted[sorted.len() / 2]);
    let mut set = find_peaks(&DataSeries::new(rf.to_vec(), counts.to_vec()), floor)?;
    set.peaks.retain(|p| p.prominence >= 5.0 * sd(p.height));
    for p in &mut set.peaks {
        p.center = refine_center(rf, counts, p);
    }
    Ok(set)
}

/// Weighted Lorentzian fit over one full width either side of the grid maximum. Keeps the
/// grid estimate when the fit fails or wanders off the peak.
fn refine_center(rf: &[f64], counts: &[f64], p: &Peak) -> f64 {
    let step = rf[1] - rf[0];
    let reach = p.width.max(4.0 * step);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (&f, &c) in rf.iter().zip(counts) {
        if (f - p.center).abs() <= reach {
            x.push((f - p.center) / step);
            y.push(c);
        }
    }
    if x.len() < 6 {
        return p.center;
    }
    let sigma: Vec<f64> = y.iter().map(|v: &f64| v.max(1.0).sqrt()).collect();
    let lorentzian = |x: f64, q: &[f64]| {
        let u = (x - q[2]) / q[3];
        q[0] + q[1] / (1.0 + u * u)
    };
    let p0 = [(p.height - p.prominence).max(0.1), p.prominence, 0.0, 0.5 * p.width / step];
    let fit = least_squares(lorentzian, &x, &y, Some(&sigma), &p0, &["baseline", "amplitude", "center", "half_width"]);
    let c = fit.value("center");
    if fit.converged() && fit.value("amplitude") > 0.0 && c.abs() <= 0.5 * p.width / step + 1.0 {
        p.center + c * step
    } else {
        p.center
    }
}

/// Stage 1 locates the sideband resonances from ²D₃/₂ F=1 to both ³D[3/2]₁/₂ levels; their
/// separation is the ³D[3/2]₁/₂ splitting. Stage 2 locates F=2 → F'=1, which lies higher by
/// the ²D₃/₂ splitting.
pub fn run_hyperfine_scan(resolved: &ResolvedConfig) -> Result<RunArtifact> {
    let cfg = &resolved.config;
    let h = &cfg.hyperfine;
    let scheme = build_level_scheme(AtomSpecies::Yb171, cfg.constants.clone())?;
    let rf = h.rf_scan_hz.values();

    let mean1 = stage1_signal(&scheme, h, &rf)?;
    let counts1 = with_noise(&mean1, h.count_noise, derive_seed(cfg.seed, 1));
    let peaks1 = locate(&rf, &counts1)?;
    if peaks1.peaks.len() < 2 {
        return Err(Error::ScanCoverage(format!(
            "stage 1 found {} resonance(s) in {:e}..{:e} Hz, two are required",
            peaks1.peaks.len(),
            rf[0],
            rf[rf.len() - 1]
        )));
    }
    // the two lowest-frequency resonances are F=1 → F'=0 and F=1 → F'=1
    let c1 = peaks1.centers();
    let split_3d = c1[1] - c1[0];

    let mean2 = stage2_signal(&scheme, h, &rf)?;
    let counts2 = with_noise(&mean2, h.count_noise, derive_seed(cfg.seed, 2));
    let peaks2 = locate(&rf, &counts2)?;
    let Some(strongest) = peaks2.most_prominent(1).peaks.first().copied() else {
        return Err(Error::ScanCoverage(format!("stage 2 found no resonance in {:e}..{:e} Hz", rf[0], rf[rf.len() - 1])));
    };
    // F=2 → F'=1 sits at carrier + rf; relative to F=1 → F'=0 that is the sum of both splittings
    let d2_line = h.stage2_carrier_detuning_hz + strongest.center;
    let split_d = d2_line - split_3d;

    let mut scan = Table::new("hyperfine_scan", &["rf_hz", "stage1_expected_counts", "stage1_counts", "stage2_expected_counts", "stage2_counts"]);
    for i in 0..rf.len() {
        scan.push(vec![rf[i].into(), mean1[i].into(), counts1[i].into(), mean2[i].into(), counts2[i].into()]);
    }
    let mut peaks = Table::new("hyperfine_peaks", &["stage", "center_hz", "height_counts", "width_hz", "prominence_counts"]);
    for (stage, set) in [(1u64, &peaks1), (2, &peaks2)] {
        for p in &set.peaks {
            peaks.push(vec![stage.into(), p.center.into(), p.height.into(), p.width.into(), p.prominence.into()]);
        }
    }
    let mut art = RunArtifact::new("hyperfine", resolved);
    art.tables.extend([scan, peaks]);
    art.derived = json!({
        "splitting_3d_half_hz": split_3d,
        "splitting_d3_2_hz": split_d,
        "stage1_peaks_hz": float_array(&c1),
        "stage2_peak_hz": strongest.center,
        "grid_step_hz": h.rf_scan_hz.step,
    });
    Ok(art)
}
