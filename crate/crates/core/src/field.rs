//! Laser beams, EOM sideband spectra, microwave pulses and experiment timelines.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::atom::OpticalLine;
use crate::error::{Error, Result};

/// Wavelength class of a beam. The 638 nm class exists for completeness: the ²F₇/₂
/// return is modeled as a fixed repump delay, so such beams drive no manifold coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WavelengthClass {
    #[serde(rename = "369")]
    Nm369,
    #[serde(rename = "935")]
    Nm935,
    #[serde(rename = "638")]
    Nm638,
}

impl WavelengthClass {
    pub fn line(self) -> Option<OpticalLine> {
        match self {
            WavelengthClass::Nm369 => Some(OpticalLine::Nm369),
            WavelengthClass::Nm935 => Some(OpticalLine::Nm935),
            WavelengthClass::Nm638 => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserBeam {
    pub wavelength: WavelengthClass,
    /// Carrier detuning from the reference transition of the beam's line.
    pub carrier_detuning_hz: f64,
    pub power_w: f64,
    /// Reporting only: intensity enters through `power_w / p_sat_w`.
    pub waist_m: f64,
    pub p_sat_w: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl LaserBeam {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.power_w.is_finite() && self.power_w >= 0.0) {
            return Err(Error::constraint(format!("{name}.power_w"), "must be >= 0"));
        }
        if !(self.waist_m.is_finite() && self.waist_m > 0.0) {
            return Err(Error::constraint(format!("{name}.waist_m"), "must be > 0"));
        }
        if !(self.p_sat_w.is_finite() && self.p_sat_w > 0.0) {
            return Err(Error::constraint(format!("{name}.p_sat_w"), "must be > 0"));
        }
        if !self.carrier_detuning_hz.is_finite() {
            return Err(Error::constraint(format!("{name}.carrier_detuning_hz"), "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sideband {
    pub order: i32,
    pub fraction: f64,
}

/// Phase modulator. Only the listed orders are transmitted; the remaining power is lost.
/// List order 0 explicitly to keep the carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulator {
    pub drive_frequency_hz: f64,
    pub sidebands: Vec<Sideband>,
}

impl Modulator {
    pub fn new(drive_frequency_hz: f64, orders: &[(i32, f64)]) -> Self {
        Self {
            drive_frequency_hz,
            sidebands: orders.iter().map(|&(order, fraction)| Sideband { order, fraction }).collect(),
        }
    }

    pub fn order_fractions(&self) -> BTreeMap<i32, f64> {
        self.sidebands.iter().map(|s| (s.order, s.fraction)).collect()
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.drive_frequency_hz.is_finite() && self.drive_frequency_hz >= 0.0) {
            return Err(Error::constraint(format!("{name}.drive_frequency_hz"), "must be >= 0"));
        }
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for s in &self.sidebands {
            if !seen.insert(s.order) {
                return Err(Error::constraint(format!("{name}.sidebands"), format!("order {} listed twice", s.order)));
            }
            if !(0.0..=1.0).contains(&s.fraction) {
                return Err(Error::constraint(format!("{name}.sidebands"), "fractions must lie in [0, 1]"));
            }
            total += s.fraction;
        }
        if total > 1.0 + 1e-12 {
            return Err(Error::constraint(format!("{name}.sidebands"), format!("fractions sum to {total} > 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralComponent {
    pub frequency_offset_hz: f64,
    pub power_w: f64,
}

/// Components of a beam after passing through `mods` in sequence.
///
/// Each combination of orders yields one component at
/// `carrier + Σ order·drive` carrying `power · Π fraction`.
pub fn effective_spectrum(beam: &LaserBeam, mods: &[Modulator]) -> Vec<SpectralComponent> {
    if !beam.enabled {
        return Vec::new();
    }
    let mut components = vec![SpectralComponent {
        frequency_offset_hz: beam.carrier_detuning_hz,
        power_w: beam.power_w,
    }];
    for m in mods {
        components = components
            .iter()
            .flat_map(|c| {
                m.sidebands.iter().map(move |s| SpectralComponent {
                    frequency_offset_hz: c.frequency_offset_hz + s.order as f64 * m.drive_frequency_hz,
                    power_w: c.power_w * s.fraction,
                })
            })
            .collect();
    }
    components
}

/// s = p / p_sat for the whole beam.
pub fn saturation_parameter(beam: &LaserBeam) -> f64 {
    beam.power_w / beam.p_sat_w
}

/// s of one spectral component of `beam`.
pub fn component_saturation(beam: &LaserBeam, component: &SpectralComponent) -> f64 {
    component.power_w / beam.p_sat_w
}

/// A beam together with the modulators in its path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivenBeam {
    pub beam: LaserBeam,
    #[serde(default)]
    pub modulators: Vec<Modulator>,
}

impl DrivenBeam {
    pub fn new(beam: LaserBeam) -> Self {
        Self { beam, modulators: Vec::new() }
    }

    pub fn with_modulator(mut self, m: Modulator) -> Self {
        self.modulators.push(m);
        self
    }

    pub fn spectrum(&self) -> Vec<SpectralComponent> {
        effective_spectrum(&self.beam, &self.modulators)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        self.beam.validate(name)?;
        for (i, m) in self.modulators.iter().enumerate() {
            m.validate(&format!("{name}.modulators[{i}]"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrowavePulse {
    /// Resonant Rabi frequency Ω.
    pub rabi_frequency_rad_per_s: f64,
    pub duration_s: f64,
    pub phase_rad: f64,
    /// Detuning from the qubit splitting.
    pub detuning_hz: f64,
    /// When set, the runner replaces `phase_rad` with a per-shot uniform phase.
    #[serde(default)]
    pub phase_scrambled: bool,
}

impl MicrowavePulse {
    pub fn resonant(rabi_frequency_rad_per_s: f64, duration_s: f64, phase_rad: f64) -> Self {
        Self {
            rabi_frequency_rad_per_s,
            duration_s,
            phase_rad,
            detuning_hz: 0.0,
            phase_scrambled: false,
        }
    }
}

/// One interval of piecewise-constant fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub label: String,
    pub duration_s: f64,
    pub beams: Vec<DrivenBeam>,
    pub pulses: Vec<MicrowavePulse>,
    /// Multiplier on the resonant S F=1 ↔ P F=0 scattering rate (coherent dark states).
    pub dark_state_factor: f64,
}

impl Interval {
    pub fn optical(label: impl Into<String>, duration_s: f64, beams: Vec<DrivenBeam>) -> Self {
        Self {
            label: label.into(),
            duration_s,
            beams,
            pulses: Vec::new(),
            dark_state_factor: 1.0,
        }
    }

    pub fn microwave(label: impl Into<String>, pulse: MicrowavePulse) -> Self {
        Self {
            label: label.into(),
            duration_s: pulse.duration_s,
            beams: Vec::new(),
            pulses: vec![pulse],
            dark_state_factor: 1.0,
        }
    }

    /// Field-free wait.
    pub fn wait(label: impl Into<String>, duration_s: f64) -> Self {
        Self::optical(label, duration_s, Vec::new())
    }

    pub fn with_dark_state_factor(mut self, kappa: f64) -> Self {
        self.dark_state_factor = kappa;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub intervals: Vec<Interval>,
}

impl Timeline {
    pub fn new(intervals: Vec<Interval>) -> Self {
        Self { intervals }
    }

    pub fn duration(&self) -> f64 {
        self.intervals.iter().map(|i| i.duration_s).sum()
    }

    /// Start time of every interval, plus the total duration as the last entry.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for i in &self.intervals {
            t += i.duration_s;
            out.push(t);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimelineViolation {
    NonPositiveDuration { label: String },
    DuplicateLabel { label: String },
    MultiplePulses { label: String },
    InvalidDarkStateFactor { label: String },
    InvalidBeam { label: String, reason: String },
}

impl fmt::Display for TimelineViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimelineViolation::NonPositiveDuration { label } => write!(f, "{label}: non-positive duration"),
            TimelineViolation::DuplicateLabel { label } => write!(f, "{label}: duplicate label"),
            TimelineViolation::MultiplePulses { label } => write!(f, "{label}: multiple pulses"),
            TimelineViolation::InvalidDarkStateFactor { label } => {
                write!(f, "{label}: dark-state factor outside (0, 1]")
            }
            TimelineViolation::InvalidBeam { label, reason } => write!(f, "{label}: {reason}"),
        }
    }
}

/// Every invariant violation in `t`; an empty list means the timeline is usable.
pub fn validate_timeline(t: &Timeline) -> std::result::Result<(), Vec<TimelineViolation>> {
    let mut violations = Vec::new();
    let mut labels = HashSet::new();
    for interval in &t.intervals {
        let label = interval.label.clone();
        if !(interval.duration_s > 0.0 && interval.duration_s.is_finite()) {
            violations.push(TimelineViolation::NonPositiveDuration { label: label.clone() });
        }
        if !labels.insert(interval.label.as_str()) {
            violations.push(TimelineViolation::DuplicateLabel { label: label.clone() });
        }
        if interval.pulses.len() > 1 {
            violations.push(TimelineViolation::MultiplePulses { label: label.clone() });
        }
        if !(interval.dark_state_factor > 0.0 && interval.dark_state_factor <= 1.0) {
            violations.push(TimelineViolation::InvalidDarkStateFactor { label: label.clone() });
        }
        for (i, b) in interval.beams.iter().enumerate() {
            if let Err(e) = b.validate(&format!("beams[{i}]")) {
                violations.push(TimelineViolation::InvalidBeam {
                    label: label.clone(),
                    reason: e.to_string(),
                });
            }
        }
        for p in &interval.pulses {
            if !(p.duration_s >= 0.0 && p.rabi_frequency_rad_per_s >= 0.0) {
                violations.push(TimelineViolation::InvalidBeam {
                    label: label.clone(),
                    reason: "pulse duration and Rabi frequency must be >= 0".into(),
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn beam(power_w: f64, detuning: f64) -> LaserBeam {
        LaserBeam {
            wavelength: WavelengthClass::Nm369,
            carrier_detuning_hz: detuning,
            power_w,
            waist_m: 30e-6,
            p_sat_w: 0.8e-6,
            enabled: true,
        }
    }

    #[test]
    fn no_modulators_is_identity() {
        let c = effective_spectrum(&beam(6e-6, -10e6), &[]);
        assert_eq!(c, vec![SpectralComponent { frequency_offset_hz: -10e6, power_w: 6e-6 }]);
    }

    #[test]
    fn second_order_sideband_of_cooling_eom_reaches_far_transition() {
        let m = Modulator::new(7.37e9, &[(2, 0.1)]);
        let c = effective_spectrum(&beam(6e-6, -10e6), &[m]);
        assert_eq!(c.len(), 1);
        assert!((c[0].frequency_offset_hz - (14.74e9 - 10e6)).abs() < 1.0);
        // S F=0 <-> P F=1 sits 14.7428 GHz above the reference
        assert!((c[0].frequency_offset_hz - 14.7428e9).abs() < 30e6);
    }

    #[test]
    fn first_order_sidebands_carry_a_third_each() {
        let m = Modulator::new(3e9, &[(1, 1.0 / 3.0), (-1, 1.0 / 3.0)]);
        let c = effective_spectrum(&beam(6e-3, 0.0), &[m]);
        assert_eq!(c.len(), 2);
        for comp in c {
            assert!((comp.power_w - 2e-3).abs() < 1e-15);
        }
    }

    #[test]
    fn saturation_parameter_values() {
        let mut b = beam(0.8e-6, 0.0);
        assert_eq!(saturation_parameter(&b), 1.0);
        b.power_w = 0.0;
        assert_eq!(saturation_parameter(&b), 0.0);
    }

    #[test]
    fn timeline_validation() {
        let ok = Timeline::new(vec![
            Interval::wait("prep", 500e-9),
            Interval::optical("detect", 1000e-6, vec![DrivenBeam::new(beam(0.8e-6, 0.0))]),
        ]);
        assert!(validate_timeline(&ok).is_ok());

        let bad = Timeline::new(vec![Interval::wait("a", 0.0)]);
        let v = validate_timeline(&bad).unwrap_err();
        assert_eq!(v, vec![TimelineViolation::NonPositiveDuration { label: "a".into() }]);
        assert_eq!(v[0].to_string(), "a: non-positive duration");

        let mut two = Interval::microwave("mw", MicrowavePulse::resonant(1.0, 1e-6, 0.0));
        two.pulses.push(MicrowavePulse::resonant(1.0, 1e-6, 0.0));
        let v = validate_timeline(&Timeline::new(vec![two, Interval::wait("mw", 1.0)])).unwrap_err();
        assert!(v.contains(&TimelineViolation::MultiplePulses { label: "mw".into() }));
        assert!(v.contains(&TimelineViolation::DuplicateLabel { label: "mw".into() }));
        assert_eq!(v[0].to_string(), "mw: multiple pulses");
    }

    fn modulator() -> impl Strategy<Value = Modulator> {
        (1e6..1e10f64, prop::collection::btree_map(-3i32..=3, 0.0..0.3f64, 1..4))
            .prop_map(|(f, m)| Modulator::new(f, &m.into_iter().collect::<Vec<_>>()))
    }

    fn sorted(mut c: Vec<SpectralComponent>) -> Vec<(f64, f64)> {
        c.sort_by(|a, b| {
            a.frequency_offset_hz
                .total_cmp(&b.frequency_offset_hz)
                .then(a.power_w.total_cmp(&b.power_w))
        });
        c.into_iter().map(|c| (c.frequency_offset_hz, c.power_w)).collect()
    }

    proptest! {
        #[test]
        fn power_is_conserved_or_lost(p in 0.0..1e-2f64, a in modulator(), b in modulator()) {
            let bm = beam(p, 0.0);
            let total: f64 = effective_spectrum(&bm, &[a, b]).iter().map(|c| c.power_w).sum();
            prop_assert!(total <= p * (1.0 + 1e-12));
        }

        #[test]
        fn modulator_order_commutes(a in modulator(), b in modulator()) {
            let bm = beam(1e-3, -5e6);
            let ab = sorted(effective_spectrum(&bm, &[a.clone(), b.clone()]));
            let ba = sorted(effective_spectrum(&bm, &[b, a]));
            prop_assert_eq!(ab.len(), ba.len());
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert!((x.0 - y.0).abs() <= 1e-6 * x.0.abs().max(1.0));
                prop_assert!((x.1 - y.1).abs() <= 1e-15);
            }
        }

        #[test]
        fn saturation_is_linear_in_power(p in 0.0..1.0f64) {
            let s1 = saturation_parameter(&beam(p, 0.0));
            let s2 = saturation_parameter(&beam(2.0 * p, 0.0));
            prop_assert_eq!(s2, 2.0 * s1);
        }
    }
}
