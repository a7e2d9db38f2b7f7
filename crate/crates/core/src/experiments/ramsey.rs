//! Two-ion Ramsey echo: parity fringes against an extra delay, and their decay with echo time.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::artifact::{float_array, RunArtifact, Table};
use super::config::{DetectionModel, NoiseModel, ResolvedConfig};
use super::detection::DetectionChain;
use crate::analysis::{fit_gaussian_decay, fit_sinusoid, fixed_frequency_amplitude, parity, DataSeries};
use crate::atom::MagneticEnvironment;
use crate::detection::{classify, Outcome};
use crate::dynamics::qubit::sample_segment_detuning;
use crate::dynamics::{apply_pulse, precess, QubitState};
use crate::error::{Error, Result};
use crate::field::MicrowavePulse;
use crate::rng::{derive_seed, stream, Domain};

/// Final state of one ion after π/2, T/2, π, T/2+Δt, π/2(phase).
///
/// `detunings` holds the quasi-static detuning during the first and second half.
pub fn echo_sequence(omega: f64, pi_time: f64, t: f64, dt: f64, phase: f64, detunings: [f64; 2]) -> QubitState {
    let half = MicrowavePulse::resonant(omega, 0.5 * pi_time, 0.0);
    let pi = MicrowavePulse::resonant(omega, pi_time, 0.0);
    let last = MicrowavePulse::resonant(omega, 0.5 * pi_time, phase);
    let mut q = apply_pulse(QubitState::zero(), &half, detunings[0]);
    q = precess(q, 0.5 * t, detunings[0]);
    q = apply_pulse(q, &pi, detunings[0]);
    q = precess(q, 0.5 * t + dt, detunings[1]);
    apply_pulse(q, &last, detunings[1])
}

fn environment(resolved: &ResolvedConfig) -> MagneticEnvironment {
    let cfg = &resolved.config;
    let mut env = cfg.environment.clone();
    if cfg.ramsey.noise_model == NoiseModel::CoherenceTime {
        env.freq_noise_rms_hz = crate::dynamics::qubit::noise_rms_for_coherence_time(cfg.ramsey.coherence_time_s);
    }
    env
}

/// Parity fringes for every echo time, the fringe amplitude against echo time, its
/// Gaussian decay time, and the single-ion fringe amplitude.
pub fn run_ramsey(resolved: &ResolvedConfig) -> Result<RunArtifact> {
    let cfg = &resolved.config;
    let r = &cfg.ramsey;
    let omega = PI / r.pi_time_s;
    let env = environment(resolved);
    let chain = match r.detection {
        DetectionModel::Simulated => Some(DetectionChain::new(cfg)?),
        DetectionModel::Ideal => None,
    };
    let dts = r.delta_t_s.values();
    let shots = r.shots_per_point;

    let mut fringes = Table::new("ramsey_fringes", &["delay_s", "delta_t_s", "parity", "p1_ion0", "p1_ion1", "shots"]);
    let mut parity_by_t: Vec<Vec<f64>> = Vec::new();
    let mut marginal_by_t: Vec<Vec<f64>> = Vec::new();
    for (ti, &t) in r.delays_s.iter().enumerate() {
        let mut par = Vec::with_capacity(dts.len());
        let mut marg = Vec::with_capacity(dts.len());
        for (di, &dt) in dts.iter().enumerate() {
            let point = derive_seed(cfg.seed, ((ti as u64) << 32) | di as u64);
            let pairs: Vec<(bool, bool)> = (0..shots)
                .into_par_iter()
                .map(|i| {
                    // analysis phase scrambled per shot, common to both ions
                    let phase = stream(point, Domain::PhaseScramble, i).random::<f64>() * 2.0 * PI;
                    let mut read = [false; 2];
                    for (site, out) in read.iter_mut().enumerate() {
                        let site = site as u64;
                        let det = [0, 1].map(|seg| sample_segment_detuning(&env, site, seg, point, i));
                        let q = echo_sequence(omega, r.pi_time_s, t, dt, phase, det);
                        let projected = q.measure(&mut stream(derive_seed(point, site), Domain::BornSampling, i));
                        *out = match &chain {
                            Some(c) => {
                                let s = derive_seed(point, 2 + site);
                                classify(c.counts(projected, s, i), &c.detector) == Outcome::One
                            }
                            None => projected,
                        };
                    }
                    (read[0], read[1])
                })
                .collect();
            let p = parity(&pairs)?;
            let n = shots as f64;
            let p0 = pairs.iter().filter(|s| s.0).count() as f64 / n;
            let p1 = pairs.iter().filter(|s| s.1).count() as f64 / n;
            fringes.push(vec![t.into(), dt.into(), p.into(), p0.into(), p1.into(), shots.into()]);
            par.push(p);
            marg.push(p0);
        }
        parity_by_t.push(par);
        marginal_by_t.push(marg);
    }

    // the fringe frequency is set by the first echo time and held for the others
    let first = fit_sinusoid(&DataSeries::new(dts.clone(), parity_by_t[0].clone()).with_labels("delta_t_s", "parity"))?;
    let f = first.value("f");
    let mut amps = Table::new("ramsey_amplitudes", &["delay_s", "parity_amplitude", "parity_amplitude_stderr", "single_ion_amplitude"]);
    let mut a = Vec::new();
    let mut a_se = Vec::new();
    let mut single = Vec::new();
    for (ti, &t) in r.delays_s.iter().enumerate() {
        let (amp, se, _, _) = fixed_frequency_amplitude(&dts, &parity_by_t[ti], f)
            .ok_or_else(|| Error::Fit(format!("fringe at T = {t} s is singular")))?;
        let (m_amp, _, _, _) =
            fixed_frequency_amplitude(&dts, &marginal_by_t[ti], f).ok_or_else(|| Error::Fit("single-ion fringe is singular".into()))?;
        amps.push(vec![t.into(), amp.into(), se.into(), m_amp.into()]);
        a.push(amp);
        a_se.push(se.max(1e-6));
        single.push(m_amp);
    }

    let mut art = RunArtifact::new("ramsey", resolved);
    let mut derived = json!({
        "fringe_frequency_hz": f,
        "fringe_frequency_stderr_hz": first.stderr("f"),
        "fringe_period_s": 1.0 / f,
        "amplitude_t0": first.value("A"),
        "amplitude_t0_stderr": first.stderr("A"),
        "parity_amplitudes": float_array(&a),
        "single_ion_amplitudes": float_array(&single),
        "single_ion_amplitude_max": single.iter().copied().fold(0.0, f64::max),
        "noise_rms_hz": env.freq_noise_rms_hz,
    });
    if r.delays_s.len() >= 3 {
        let decay = fit_gaussian_decay(&DataSeries::new(r.delays_s.clone(), a).with_sigma(a_se).with_labels("delay_s", "parity_amplitude"))?;
        derived["tau_s"] = json!(decay.value("tau"));
        derived["tau_stderr_s"] = json!(decay.stderr("tau"));
        derived["decay_fit_status"] = json!(format!("{:?}", decay.status));
        art.documents.push(("coherence_fit".into(), serde_json::to_value(&decay)?));
    }
    art.tables.extend([fringes, amps]);
    art.documents.push(("fringe_fit".into(), serde_json::to_value(&first)?));
    art.derived = derived;
    Ok(art)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn echo_without_detuning_returns_to_the_start() {
        let omega = PI / 6e-6;
        // the phase of the last π/2 pulse sets the outcome: 0 undoes the first π/2 after the π flip
        let q = echo_sequence(omega, 6e-6, 1e-3, 0.0, 0.0, [0.0, 0.0]);
        assert!((q.prob_one() - 0.0).abs() < 1e-12 || (q.prob_one() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_detuning_cancels_but_extra_delay_does_not() {
        let omega = PI / 6e-6;
        let base = echo_sequence(omega, 6e-6, 0.2, 0.0, FRAC_PI_2, [0.0, 0.0]).prob_one();
        let static_det = echo_sequence(omega, 6e-6, 0.2, 0.0, FRAC_PI_2, [3.7, 3.7]).prob_one();
        assert!((base - static_det).abs() < 1e-6, "{base} {static_det}");
        // a quarter period of extra delay at 2.43 kHz moves the fringe by π/2
        let shifted = echo_sequence(omega, 6e-6, 0.2, 0.25 / 2430.0, FRAC_PI_2, [2430.0, 2430.0]).prob_one();
        assert!((shifted - base).abs() > 0.4, "{base} {shifted}");
    }
}
