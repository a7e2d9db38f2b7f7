//! Coherent two-level evolution of the hyperfine qubit under microwave pulses.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::atom::MagneticEnvironment;
use crate::field::MicrowavePulse;
use crate::rng::{derive_seed, stream, Domain};

/// Amplitudes `(c0, c1)` on `|0⟩` (S F=0) and `|1⟩` (S F=1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub c0: Complex64,
    pub c1: Complex64,
}

impl QubitState {
    pub fn zero() -> Self {
        Self { c0: Complex64::new(1.0, 0.0), c1: Complex64::new(0.0, 0.0) }
    }

    pub fn one() -> Self {
        Self { c0: Complex64::new(0.0, 0.0), c1: Complex64::new(1.0, 0.0) }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn prob_one(&self) -> f64 {
        self.c1.norm_sqr() / self.norm_sqr()
    }

    /// Projective measurement; `true` means `|1⟩`.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.prob_one()
    }
}

/// Evolves `q` through `pulse` with total detuning `pulse.detuning_hz + shot_detuning_hz`.
///
/// Rotating-frame Hamiltonian `H = (Ω/2)(cos φ σx + sin φ σy) − (δ/2) σz`, δ = 2π·detuning,
/// applied exactly as `cos(Ω't/2) − i sin(Ω't/2) n̂·σ` with `Ω' = √(Ω² + δ²)`.
/// A pulse with Ω = 0 is free precession.
pub fn apply_pulse(q: QubitState, pulse: &MicrowavePulse, shot_detuning_hz: f64) -> QubitState {
    let omega = pulse.rabi_frequency_rad_per_s;
    let delta = 2.0 * PI * (pulse.detuning_hz + shot_detuning_hz);
    let (nx, ny, nz) = (omega * pulse.phase_rad.cos(), omega * pulse.phase_rad.sin(), -delta);
    let rate = (nx * nx + ny * ny + nz * nz).sqrt();
    if rate == 0.0 || pulse.duration_s == 0.0 {
        return q;
    }
    let half = 0.5 * rate * pulse.duration_s;
    let (s, c) = half.sin_cos();
    let i = Complex64::i();
    let (nx, ny, nz) = (nx / rate, ny / rate, nz / rate);
    // n̂·σ = [[nz, nx − i ny], [nx + i ny, −nz]]
    let off_minus = Complex64::new(nx, -ny);
    let off_plus = Complex64::new(nx, ny);
    let c0 = q.c0 * Complex64::new(c, -s * nz) - i * s * off_minus * q.c1;
    let c1 = q.c1 * Complex64::new(c, s * nz) - i * s * off_plus * q.c0;
    QubitState { c0, c1 }
}

/// Free precession for `duration_s` at detuning `detuning_hz`.
pub fn precess(q: QubitState, duration_s: f64, detuning_hz: f64) -> QubitState {
    let wait = MicrowavePulse { rabi_frequency_rad_per_s: 0.0, duration_s, phase_rad: 0.0, detuning_hz, phase_scrambled: false };
    apply_pulse(q, &wait, 0.0)
}

/// Quasi-static detuning of `site` for one shot: its deterministic offset
/// (`site × differential_offset_hz`) plus Gaussian noise of rms `freq_noise_rms_hz`.
pub fn sample_shot_detuning(env: &MagneticEnvironment, site: u64, seed: u64, shot_index: u64) -> f64 {
    sample_segment_detuning(env, site, 0, seed, shot_index)
}

/// As [`sample_shot_detuning`], with an independent draw per free-evolution `segment`.
pub fn sample_segment_detuning(env: &MagneticEnvironment, site: u64, segment: u64, seed: u64, shot_index: u64) -> f64 {
    let mean = site as f64 * env.differential_offset_hz;
    if env.freq_noise_rms_hz == 0.0 {
        return mean;
    }
    let mut rng = stream(derive_seed(seed, (site << 16) | segment), Domain::ShotDetuning, shot_index);
    Normal::new(mean, env.freq_noise_rms_hz).expect("validated rms").sample(&mut rng)
}

/// Detuning rms that makes the echo parity amplitude decay as `exp(−(T/τ)²)` when each
/// echo half draws an independent detuning: `σ = 1/(√2·π·τ)`.
pub fn noise_rms_for_coherence_time(tau_s: f64) -> f64 {
    1.0 / (2f64.sqrt() * PI * tau_s)
}

/// Born-rule outcome of one shot; `true` means `|1⟩`.
pub fn sample_outcome(q: &QubitState, seed: u64, shot_index: u64) -> bool {
    q.measure(&mut stream(seed, Domain::BornSampling, shot_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pulse(omega: f64, t: f64, phase: f64, detuning: f64) -> MicrowavePulse {
        MicrowavePulse { rabi_frequency_rad_per_s: omega, duration_s: t, phase_rad: phase, detuning_hz: detuning, phase_scrambled: false }
    }

    #[test]
    fn pi_pulse_transfers_population() {
        let t_pi = 6.0e-6;
        let omega = PI / t_pi;
        let q = apply_pulse(QubitState::zero(), &MicrowavePulse::resonant(omega, t_pi, 0.0), 0.0);
        assert!((q.prob_one() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_duration_is_identity() {
        let q0 = QubitState { c0: Complex64::new(0.6, 0.0), c1: Complex64::new(0.0, 0.8) };
        assert_eq!(apply_pulse(q0, &pulse(1e6, 0.0, 0.3, 10.0), 5.0), q0);
    }

    #[test]
    fn two_half_pi_pulses_give_cos_squared() {
        let omega = 1e5;
        let t = PI / 2.0 / omega;
        for k in 0..16 {
            let phi = k as f64 * PI / 8.0;
            let q = apply_pulse(QubitState::zero(), &pulse(omega, t, 0.0, 0.0), 0.0);
            let q = apply_pulse(q, &pulse(omega, t, phi, 0.0), 0.0);
            assert!((q.prob_one() - (phi / 2.0).cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn detuned_rabi_matches_generalized_formula() {
        let omega = 2.0 * PI * 50e3;
        let det = 30e3;
        let d = 2.0 * PI * det;
        let g = (omega * omega + d * d).sqrt();
        for t in [1e-6, 3.3e-6, 1.7e-5] {
            let q = apply_pulse(QubitState::zero(), &pulse(omega, t, 0.4, 0.0), det);
            let expected = omega * omega / (g * g) * (g * t / 2.0).sin().powi(2);
            assert!((q.prob_one() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn echo_cancels_static_detuning() {
        let omega = 1e6;
        let t2 = PI / 2.0 / omega;
        let det = 137.0;
        let q = apply_pulse(QubitState::zero(), &pulse(omega, t2, 0.0, 0.0), det);
        let q = precess(q, 1e-3, det);
        let q = apply_pulse(q, &pulse(omega, 2.0 * t2, 0.0, 0.0), det);
        let q = precess(q, 1e-3, det);
        let q = apply_pulse(q, &pulse(omega, t2, PI / 2.0, 0.0), det);
        // without the echo this would sit at (1 + sin(2π·det·2ms))/2
        assert!((q.prob_one() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn shot_detuning_statistics() {
        let env = MagneticEnvironment { freq_noise_rms_hz: 3.0, ..Default::default() };
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|i| sample_shot_detuning(&env, 0, 5, i)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd / 3.0 - 1.0).abs() < 0.02);
        assert!(mean.abs() < 5.0 * 3.0 / (n as f64).sqrt());

        let quiet = MagneticEnvironment { freq_noise_rms_hz: 0.0, ..Default::default() };
        assert_eq!(sample_shot_detuning(&quiet, 1, 5, 9), quiet.differential_offset_hz);

        let b: f64 = (0..n).map(|i| sample_shot_detuning(&env, 1, 5, i)).sum::<f64>() / n as f64;
        assert!((b - mean - 2430.0).abs() < 0.1);
    }

    #[test]
    fn coherence_rms_matches_echo_decay() {
        let sigma = noise_rms_for_coherence_time(2.5);
        assert!((sigma - 0.090_031_6).abs() < 1e-6);
        assert!((2.0 * PI * PI * sigma * sigma * 2.5f64.powi(2) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn norm_is_preserved(
            ops in proptest::collection::vec((0.0f64..1e6, 0.0f64..1e-4, -4.0f64..4.0, -1e5f64..1e5), 1..50)
        ) {
            let mut q = QubitState::zero();
            for (omega, t, phi, det) in ops {
                q = apply_pulse(q, &pulse(omega, t, phi, det), 0.0);
            }
            prop_assert!((q.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ten_thousand_pulses_stay_normalized() {
        let mut q = QubitState::zero();
        for k in 0..10_000 {
            let p = pulse(1.3e5 + k as f64, 7.1e-6, 0.37 * k as f64, 1234.5);
            q = apply_pulse(q, &p, 17.0);
        }
        assert!((q.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
