//! Optical pumping and decay rates between hyperfine manifolds.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::atom::{dipole_line, transition_offset, EmissionClass, LevelScheme, ManifoldId, Term};
use crate::error::{Error, Result};
use crate::field::{component_saturation, DrivenBeam};

/// Steady-state excited fraction of a two-level system driven at saturation `s`
/// and detuning `delta_hz`, for an upper level decaying at angular rate `gamma`:
/// `(s/2) / (1 + s + (4π·delta/γ)²)`. On resonance this is `s / (2(1+s))`.
pub fn excited_population(s: f64, delta_hz: f64, gamma: f64) -> f64 {
    let x = 4.0 * PI * delta_hz / gamma;
    0.5 * s / (1.0 + s + x * x)
}

/// Photon scattering rate κ·γ·P_e.
pub fn scattering_rate(excited: f64, gamma: f64, kappa: f64) -> f64 {
    kappa * gamma * excited
}

/// Symmetric absorption / stimulated-emission rate `W = (γ/2)·s / (1 + (4π·delta/γ)²)`.
///
/// A closed two-level rate equation with `W` both ways and spontaneous decay γ has
/// steady state `W / (2W + γ)`, which equals [`excited_population`]. Equivalently
/// `W = scattering_rate(P_e, γ, 1) / (1 − 2 P_e)`.
pub fn pump_rate(s: f64, delta_hz: f64, gamma: f64) -> f64 {
    let x = 4.0 * PI * delta_hz / gamma;
    0.5 * gamma * s / (1.0 + x * x)
}

/// Pump rate whose two-level steady-state scattering is κ times that produced by `w`.
fn dark_state_rescale(w: f64, gamma: f64, kappa: f64) -> f64 {
    if kappa >= 1.0 || w == 0.0 {
        return w;
    }
    let p = w / (2.0 * w + gamma);
    gamma * kappa * p / (1.0 - 2.0 * kappa * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    /// Dark-state factor κ for the S F=1 ↔ P F=0 detection coupling of ¹⁷¹Yb⁺.
    pub kappa: f64,
    /// Scalar weight on pump terms detuned by more than `off_resonant_threshold_hz`.
    pub off_resonant_weight: f64,
    pub off_resonant_threshold_hz: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            off_resonant_weight: 1.0,
            off_resonant_threshold_hz: 200e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransitionKind {
    /// Spontaneous decay along scheme channel `channel`.
    Spontaneous { channel: usize, emission: EmissionClass },
    /// Laser-driven absorption (upward) or stimulated emission (downward).
    Pump { off_resonant: bool },
    /// Collisional trapping into ²F₇/₂.
    Trap,
    /// Return from ²F₇/₂.
    Repump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: ManifoldId,
    pub to: ManifoldId,
    pub rate: f64,
    pub kind: TransitionKind,
}

impl Transition {
    pub fn emits(&self) -> Option<EmissionClass> {
        match self.kind {
            TransitionKind::Spontaneous { emission, .. } => Some(emission),
            _ => None,
        }
    }
}

/// Generator of the population dynamics `dp/dt = M p`, plus the itemized transitions it
/// was assembled from (the stochastic engine needs to know which jump emitted what).
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub matrix: DMatrix<f64>,
    pub transitions: Vec<Transition>,
}

impl RateMatrix {
    pub fn from_transitions(n: usize, transitions: Vec<Transition>) -> Self {
        let mut matrix = DMatrix::zeros(n, n);
        for t in &transitions {
            matrix[(t.to.0, t.from.0)] += t.rate;
            matrix[(t.from.0, t.from.0)] -= t.rate;
        }
        Self { matrix, transitions }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn out_rate(&self, m: ManifoldId) -> f64 {
        -self.matrix[(m.0, m.0)]
    }

    pub fn max_rate(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// Checks non-negative off-diagonals and zero column sums, relative to the largest rate.
    pub fn check_conservative(&self, tol: f64) -> Result<()> {
        let n = self.dim();
        let scale = self.max_rate().max(1.0);
        for j in 0..n {
            let mut sum = 0.0;
            for i in 0..n {
                let v = self.matrix[(i, j)];
                if i != j && v < 0.0 {
                    return Err(Error::constraint("rate_matrix", format!("negative rate at ({i},{j})")));
                }
                sum += v;
            }
            if sum.abs() > tol * scale {
                return Err(Error::constraint(
                    "rate_matrix",
                    format!("column {j} sums to {sum:e}, probability is not conserved"),
                ));
            }
        }
        Ok(())
    }
}

/// Assembles pump, decay and trap rates for `scheme` under the given beams.
///
/// Every spectral component drives every dipole-allowed coupling of its line with
/// [`pump_rate`] at the component's detuning from that coupling. A coupling that is not
/// dipole-allowed receives nothing.
pub fn build_rate_matrix(scheme: &LevelScheme, beams: &[DrivenBeam], opts: &RateOptions) -> RateMatrix {
    let mut transitions = Vec::new();

    let (s_one, p_zero) = (scheme.find(Term::S12, 2), scheme.find(Term::P12, 0));
    let detection_coupling = match scheme.species {
        crate::atom::AtomSpecies::Yb171 => s_one.zip(p_zero),
        crate::atom::AtomSpecies::Yb174 => None,
    };

    for lower in scheme.ids() {
        for upper in scheme.ids() {
            let Some(line) = dipole_line(scheme, lower, upper) else { continue };
            let offset = transition_offset(scheme, lower, upper).expect("allowed coupling");
            let gamma = scheme.decay_rate(scheme.manifold(upper).term);
            let (mut near, mut far) = (0.0, 0.0);
            for driven in beams.iter().filter(|b| b.beam.enabled && b.beam.wavelength.line() == Some(line)) {
                for c in driven.spectrum() {
                    let detuning = c.frequency_offset_hz - offset;
                    let w = pump_rate(component_saturation(&driven.beam, &c), detuning, gamma);
                    if detuning.abs() > opts.off_resonant_threshold_hz {
                        far += w * opts.off_resonant_weight;
                    } else {
                        near += w;
                    }
                }
            }
            if detection_coupling == Some((lower, upper)) {
                near = dark_state_rescale(near, gamma, opts.kappa);
            }
            for (rate, off_resonant) in [(near, false), (far, true)] {
                if rate > 0.0 {
                    let kind = TransitionKind::Pump { off_resonant };
                    transitions.push(Transition { from: lower, to: upper, rate, kind });
                    transitions.push(Transition { from: upper, to: lower, rate, kind });
                }
            }
        }
    }

    for (i, ch) in scheme.channels.iter().enumerate() {
        let gamma = scheme.decay_rate(scheme.manifold(ch.upper).term);
        transitions.push(Transition {
            from: ch.upper,
            to: ch.lower,
            rate: ch.branching_fraction * gamma,
            kind: TransitionKind::Spontaneous { channel: i, emission: ch.emission_class },
        });
    }

    if let Some(f72) = scheme.manifolds_of(Term::F72).first().copied() {
        let c = &scheme.constants;
        for m in scheme.ids().filter(|&m| m != f72) {
            transitions.push(Transition { from: m, to: f72, rate: c.f72_trap_rate_per_s, kind: TransitionKind::Trap });
        }
        for (to, weight) in f72_return_weights(scheme) {
            transitions.push(Transition {
                from: f72,
                to,
                rate: weight / c.f72_repump_delay_s,
                kind: TransitionKind::Repump,
            });
        }
    }

    RateMatrix::from_transitions(scheme.len(), transitions)
}

/// Ground manifolds the ²F₇/₂ repump returns to, weighted by degeneracy.
pub fn f72_return_weights(scheme: &LevelScheme) -> Vec<(ManifoldId, f64)> {
    let grounds = scheme.manifolds_of(Term::S12);
    let total: usize = grounds.iter().map(|&g| scheme.manifold(g).degeneracy()).sum();
    grounds
        .into_iter()
        .map(|g| (g, scheme.manifold(g).degeneracy() as f64 / total as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{build_level_scheme, AtomSpecies, PhysicalConstants};
    use crate::field::{LaserBeam, WavelengthClass};

    const GAMMA: f64 = 1.0 / 8.07e-9;

    #[test]
    fn excited_population_examples() {
        assert_eq!(excited_population(1.0, 0.0, GAMMA), 0.25);
        assert!(excited_population(1e6, 0.0, GAMMA) > 0.4999);
        let delta = 2f64.sqrt() * GAMMA / (4.0 * PI);
        assert!((excited_population(1.0, delta, GAMMA) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn scattering_rate_examples() {
        let r = scattering_rate(0.5, GAMMA, 1.0);
        assert!((r - 6.195e7).abs() / 6.195e7 < 1e-3);
        assert_eq!(scattering_rate(0.0, GAMMA, 1.0), 0.0);
        assert!((scattering_rate(0.25, GAMMA, 1.0 / 3.0) - GAMMA / 12.0).abs() < 1e-6);
    }

    #[test]
    fn pump_rate_identity() {
        for (s, d) in [(0.3, 0.0), (2.0, 5e6), (40.0, -3e7)] {
            let p = excited_population(s, d, GAMMA);
            let w = pump_rate(s, d, GAMMA);
            let via = scattering_rate(p, GAMMA, 1.0) / (1.0 - 2.0 * p);
            assert!((w - via).abs() / w < 1e-12);
            assert!((w / (2.0 * w + GAMMA) - p).abs() < 1e-15);
        }
    }

    #[test]
    fn dark_state_factor_scales_two_level_scattering() {
        let w = pump_rate(1.0, 3e6, GAMMA);
        let natural = w / (2.0 * w + GAMMA);
        let wk = dark_state_rescale(w, GAMMA, 1.0 / 3.0);
        let reduced = wk / (2.0 * wk + GAMMA);
        assert!((reduced / natural - 1.0 / 3.0).abs() < 1e-12);
    }

    fn beam369(power_w: f64, detuning: f64) -> DrivenBeam {
        DrivenBeam::new(LaserBeam {
            wavelength: WavelengthClass::Nm369,
            carrier_detuning_hz: detuning,
            power_w,
            waist_m: 30e-6,
            p_sat_w: 1e-6,
            enabled: true,
        })
    }

    #[test]
    fn columns_sum_to_zero() {
        let scheme = build_level_scheme(AtomSpecies::Yb171, PhysicalConstants::default()).unwrap();
        let m = build_rate_matrix(&scheme, &[beam369(3e-6, -10e6)], &RateOptions::default());
        m.check_conservative(1e-12).unwrap();
        assert!(m.transitions.iter().all(|t| t.rate >= 0.0));
    }

    #[test]
    fn forbidden_couplings_receive_no_pumping() {
        let scheme = build_level_scheme(AtomSpecies::Yb171, PhysicalConstants::default()).unwrap();
        let (s0, _) = scheme.qubit_manifolds();
        let p0 = scheme.find(Term::P12, 0).unwrap();
        // a component sitting exactly where S F=0 <-> P F=0 would be
        let m = build_rate_matrix(&scheme, &[beam369(1e-3, -12_642_812_118.5)], &RateOptions::default());
        assert!(!m.transitions.iter().any(|t| t.from == s0 && t.to == p0));
    }

    #[test]
    fn off_resonant_weight_scales_only_far_couplings() {
        let scheme = build_level_scheme(AtomSpecies::Yb171, PhysicalConstants::default()).unwrap();
        let beams = [beam369(1e-6, 3e6)];
        let base = build_rate_matrix(&scheme, &beams, &RateOptions::default());
        let off = build_rate_matrix(&scheme, &beams, &RateOptions { off_resonant_weight: 0.0, ..Default::default() });
        let far = |m: &RateMatrix| {
            m.transitions
                .iter()
                .filter(|t| t.kind == TransitionKind::Pump { off_resonant: true })
                .count()
        };
        assert!(far(&base) > 0);
        assert_eq!(far(&off), 0);
        let near = |m: &RateMatrix| -> f64 {
            m.transitions
                .iter()
                .filter(|t| t.kind == TransitionKind::Pump { off_resonant: false })
                .map(|t| t.rate)
                .sum()
        };
        assert_eq!(near(&base), near(&off));
    }
}
