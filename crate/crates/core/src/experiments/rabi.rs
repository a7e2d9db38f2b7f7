//! Resonant Rabi flopping scanned over pulse duration.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde_json::json;

use super::artifact::{RunArtifact, Table};
use super::config::{DetectionModel, ResolvedConfig};
use super::detection::DetectionChain;
use crate::analysis::{fit_sinusoid, DataSeries};
use crate::detection::{classify, Outcome};
use crate::dynamics::{apply_pulse, sample_outcome, QubitState};
use crate::error::Result;
use crate::field::MicrowavePulse;
use crate::rng::derive_seed;

/// P(|1⟩) against pulse duration and the fitted flopping frequency. The π time follows as
/// `1 / (2f)`.
pub fn run_rabi(resolved: &ResolvedConfig) -> Result<RunArtifact> {
    let cfg = &resolved.config;
    let r = &cfg.rabi;
    let omega = PI / r.pi_time_s;
    let chain = match r.detection {
        DetectionModel::Simulated => Some(DetectionChain::new(cfg)?),
        DetectionModel::Ideal => None,
    };
    let durations = r.durations_s.values();
    let shots = r.shots_per_point;

    let mut table = Table::new("rabi", &["duration_s", "p1_theory", "ones", "shots", "p1", "p1_stderr"]);
    let mut p1 = Vec::with_capacity(durations.len());
    for (k, &t) in durations.iter().enumerate() {
        let q = apply_pulse(QubitState::zero(), &MicrowavePulse::resonant(omega, t, 0.0), 0.0);
        let seed = derive_seed(cfg.seed, k as u64);
        let ones: u64 = (0..shots)
            .into_par_iter()
            .map(|i| {
                let projected = sample_outcome(&q, seed, i);
                let read = match &chain {
                    Some(c) => classify(c.counts(projected, seed, i), &c.detector) == Outcome::One,
                    None => projected,
                };
                read as u64
            })
            .sum();
        let p = ones as f64 / shots as f64;
        let se = (p * (1.0 - p) / shots as f64).sqrt();
        table.push(vec![t.into(), q.prob_one().into(), ones.into(), shots.into(), p.into(), se.into()]);
        p1.push(p);
    }

    let fit = fit_sinusoid(&DataSeries::new(durations, p1).with_labels("duration_s", "p1"))?;
    let f = fit.value("f");
    let mut art = RunArtifact::new("rabi", resolved);
    art.tables.push(table);
    art.documents.push(("rabi_fit".into(), serde_json::to_value(&fit)?));
    art.derived = json!({
        "rabi_frequency_hz": f,
        "rabi_frequency_stderr_hz": fit.stderr("f"),
        "pi_time_s": 0.5 / f,
        "pi_time_stderr_s": 0.5 * fit.stderr("f") / (f * f),
        "configured_pi_time_s": r.pi_time_s,
        "amplitude": fit.value("A"),
        "offset": fit.value("offset"),
        "fit_status": format!("{:?}", fit.status),
    });
    Ok(art)
}
