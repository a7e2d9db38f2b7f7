//! Optical pumping into |0⟩ with the 2.1 GHz sideband, from the rate equations.

use serde_json::json;

use super::artifact::{RunArtifact, Table};
use super::config::ResolvedConfig;
use crate::atom::{build_level_scheme, AtomSpecies};
use crate::dynamics::{build_rate_matrix, evolve_sampled, PopulationVector, RateOptions};
use crate::error::Result;

/// P(|0⟩) against pumping time for an ion starting in |1⟩.
///
/// Downstream scenarios prepare |0⟩ ideally; this benchmarks how close pumping comes to it.
pub fn run_state_prep(resolved: &ResolvedConfig) -> Result<RunArtifact> {
    let cfg = &resolved.config;
    let s = &cfg.state_prep;
    let scheme = build_level_scheme(AtomSpecies::Yb171, cfg.constants.clone())?;
    let (q0, q1) = scheme.qubit_manifolds();
    let m = build_rate_matrix(&scheme, &[s.pump.clone(), s.repump.clone()], &RateOptions::default());
    let (samples, _) = evolve_sampled(&m, &PopulationVector::pure(scheme.len(), q1.0), s.duration_s, s.samples)?;

    let mut table = Table::new("state_prep", &["time_s", "p_zero", "p_one", "p_other"]);
    for (k, p) in samples.iter().enumerate() {
        let t = s.duration_s * k as f64 / s.samples as f64;
        let (a, b) = (p.0[q0.0], p.0[q1.0]);
        table.push(vec![t.into(), a.into(), b.into(), (p.total() - a - b).into()]);
    }
    let last = samples.last().expect("at least the initial sample");
    let mut art = RunArtifact::new("state_prep", resolved);
    art.tables.push(table);
    art.derived = json!({
        "duration_s": s.duration_s,
        "p_zero_final": last.0[q0.0],
    });
    Ok(art)
}
