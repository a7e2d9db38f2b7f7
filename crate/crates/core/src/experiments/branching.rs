//! ²P₁/₂ → ²D₃/₂ branching ratio from fluorescence decay with the repump switched off.

use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::artifact::{float_array, RunArtifact, Table};
use super::config::{BranchingScenario, Engine, ResolvedConfig};
use crate::analysis::{fit_branching_saturation, fit_exponential_decay, BranchingFit, DataSeries, FitResult};
use crate::atom::{build_level_scheme, AtomSpecies, EmissionClass, LevelScheme, ManifoldId, Term};
use crate::dynamics::trajectory::JumpObserver;
use crate::dynamics::{build_rate_matrix, evolve_populations, PopulationVector, Propagator, RateMatrix, RateOptions};
use crate::dynamics::{rates::Transition, CompiledTimeline};
use crate::error::{Error, Result};
use crate::field::{DrivenBeam, Interval, LaserBeam, Timeline};
use crate::rng::{derive_seed, stream, Domain};

const CHUNK: u64 = 4096;

fn probe_at(b: &BranchingScenario, power_w: f64) -> LaserBeam {
    LaserBeam { power_w, p_sat_w: b.p_sat_w, ..b.probe.clone() }
}

fn n_bins(b: &BranchingScenario) -> usize {
    (b.collect_interval_s / b.bin_width_s + 1e-9).floor() as usize
}

/// Bin centers measured from the start of the collection interval.
pub fn bin_times(b: &BranchingScenario) -> Vec<f64> {
    (0..n_bins(b)).map(|k| (k as f64 + 0.5) * b.bin_width_s).collect()
}

fn photon_rate(m: &RateMatrix, p: &[f64]) -> f64 {
    m.transitions.iter().filter(|t| t.emits() == Some(EmissionClass::Nm369)).map(|t| t.rate * p[t.from.0]).sum()
}

fn ground(scheme: &LevelScheme) -> ManifoldId {
    scheme.manifolds_of(Term::S12)[0]
}

/// Emitted 369 nm photons per sequence in each collection bin, from the rate equations.
pub fn expected_photons(scheme: &LevelScheme, b: &BranchingScenario, power_w: f64) -> Result<Vec<f64>> {
    let probe = DrivenBeam::new(probe_at(b, power_w));
    let repump = DrivenBeam::new(b.repump.clone());
    let opts = RateOptions::default();
    let on = build_rate_matrix(scheme, &[probe.clone(), repump], &opts);
    let off = build_rate_matrix(scheme, &[probe], &opts);
    let mut p = evolve_populations(&on, &PopulationVector::pure(scheme.len(), ground(scheme).0), b.repump_interval_s)?;
    let prop = Propagator::new(&off, b.bin_width_s)?;
    let mut out = Vec::with_capacity(n_bins(b));
    for _ in 0..n_bins(b) {
        out.push(photon_rate(&off, &prop.integrate(&p)));
        p = prop.advance(&p);
    }
    Ok(out)
}

/// Expected registered counts per bin summed over all repetitions.
pub fn expected_counts(photons: &[f64], b: &BranchingScenario) -> Vec<f64> {
    let reps = b.repetitions as f64;
    photons.iter().map(|n| reps * (b.efficiency * n + b.dark_rate_per_s * b.bin_width_s)).collect()
}

/// Poisson draw per bin around `mean`.
pub fn poisson_counts(mean: &[f64], seed: u64, index: u64) -> Vec<u64> {
    let mut rng = stream(seed, Domain::CountNoise, index);
    mean.iter()
        .map(|&m| if m > 0.0 { Poisson::new(m).expect("positive mean").sample(&mut rng) as u64 } else { 0 })
        .collect()
}

struct CollectBins<'a> {
    start: f64,
    width: f64,
    efficiency: f64,
    bins: &'a mut [u64],
    rng: rand_chacha::ChaCha8Rng,
}

impl JumpObserver for CollectBins<'_> {
    fn jump(&mut self, time: f64, t: &Transition) {
        if time < self.start || t.emits() != Some(EmissionClass::Nm369) {
            return;
        }
        let k = ((time - self.start) / self.width) as usize;
        if k < self.bins.len() && rand::Rng::random::<f64>(&mut self.rng) < self.efficiency {
            self.bins[k] += 1;
        }
    }
}

/// Registered counts per bin from `repetitions` quantum-jump sequences plus Poisson dark counts.
pub fn monte_carlo_counts(scheme: &LevelScheme, b: &BranchingScenario, power_w: f64, seed: u64) -> Result<Vec<u64>> {
    let probe = DrivenBeam::new(probe_at(b, power_w));
    let timeline = Timeline::new(vec![
        Interval::optical("repump", b.repump_interval_s, vec![probe.clone(), DrivenBeam::new(b.repump.clone())]),
        Interval::optical("collect", b.collect_interval_s, vec![probe]),
    ]);
    let compiled = CompiledTimeline::new(scheme, &timeline, &RateOptions::default())?;
    let n = n_bins(b);
    let s0 = ground(scheme);
    let chunks = b.repetitions.div_ceil(CHUNK);
    let mut bins = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut bins = vec![0u64; n];
            for i in c * CHUNK..((c + 1) * CHUNK).min(b.repetitions) {
                let mut obs = CollectBins {
                    start: b.repump_interval_s,
                    width: b.bin_width_s,
                    efficiency: b.efficiency,
                    bins: &mut bins,
                    rng: stream(seed, Domain::DetectorThinning, i),
                };
                compiled.run_with(s0, &mut stream(seed, Domain::Trajectory, i), &mut obs);
            }
            bins
        })
        .reduce(|| vec![0u64; n], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        });
    let dark = vec![b.repetitions as f64 * b.dark_rate_per_s * b.bin_width_s; n];
    for (x, d) in bins.iter_mut().zip(poisson_counts(&dark, seed, 0)) {
        *x += d;
    }
    Ok(bins)
}

/// Exponential fit of one decay trace with Poisson weights.
pub fn fit_decay(times: &[f64], counts: &[u64]) -> Result<FitResult> {
    let y: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let sigma: Vec<f64> = y.iter().map(|v| v.max(1.0).sqrt()).collect();
    let fit = fit_exponential_decay(&DataSeries::new(times.to_vec(), y).with_sigma(sigma).with_labels("time_s", "counts"))?;
    if !fit.converged() || !(fit.value("b") > 0.0) {
        return Err(Error::Fit(format!("exponential decay fit ended {:?} with b = {:e}", fit.status, fit.value("b"))));
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: u64,
    pub decay_rates_per_s: Vec<f64>,
    pub decay_stderr_per_s: Vec<f64>,
    pub saturation: BranchingFit,
}

impl ReplicationResult {
    pub fn covers(&self, truth: f64) -> bool {
        (self.saturation.r - truth).abs() <= self.saturation.r_stderr
    }
}

struct Replica {
    result: ReplicationResult,
    traces: Vec<(Vec<u64>, Vec<f64>)>,
    fits: Vec<FitResult>,
}

fn replicate(scheme: &LevelScheme, b: &BranchingScenario, cached: &[Vec<f64>], master: u64, k: u64) -> Result<Replica> {
    let seed = derive_seed(master, k);
    let times = bin_times(b);
    let mut jitter = stream(seed, Domain::PowerJitter, 0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut points = Vec::new();
    let mut traces = Vec::new();
    let mut fits = Vec::new();
    for (i, &nominal) in b.powers_w.iter().enumerate() {
        // the delivered power differs from the nominal one by the jitter fraction
        let actual = nominal * (1.0 + b.power_jitter_fraction * normal.sample(&mut jitter));
        let (counts, mean) = match b.engine {
            Engine::Ode => {
                let photons = if b.power_jitter_fraction > 0.0 { expected_photons(scheme, b, actual)? } else { cached[i].clone() };
                let mean = expected_counts(&photons, b);
                (poisson_counts(&mean, seed, i as u64), mean)
            }
            Engine::MonteCarlo => {
                let counts = monte_carlo_counts(scheme, b, actual, derive_seed(seed, i as u64))?;
                (counts, expected_counts(&cached[i], b))
            }
        };
        let fit = fit_decay(&times, &counts).map_err(|e| Error::Fit(format!("power {nominal:e} W: {e}")))?;
        points.push((fit.value("b"), nominal, b.power_error_fraction * nominal));
        traces.push((counts, mean));
        fits.push(fit);
    }
    let c = &scheme.constants;
    let saturation = fit_branching_saturation(&points, c.gamma_p12_per_s, c.gamma_relative_uncertainty())?;
    let result = ReplicationResult {
        replication: k,
        decay_rates_per_s: fits.iter().map(|f| f.value("b")).collect(),
        decay_stderr_per_s: fits.iter().map(|f| f.stderr("b")).collect(),
        saturation,
    };
    Ok(Replica { result, traces, fits })
}

/// Decay traces at each probe power, their exponential fits, and the saturation fit giving
/// R. With `replications > 1` the measurement noise is redrawn that many times.
pub fn run_branching(resolved: &ResolvedConfig) -> Result<RunArtifact> {
    let cfg = &resolved.config;
    let b = &cfg.branching;
    let scheme = build_level_scheme(AtomSpecies::Yb174, cfg.constants.clone())?;
    let cached: Vec<Vec<f64>> = b.powers_w.iter().map(|&p| expected_photons(&scheme, b, p)).collect::<Result<_>>()?;

    let first = replicate(&scheme, b, &cached, cfg.seed, 0)?;
    let rest: Vec<ReplicationResult> =
        (1..b.replications).into_par_iter().map(|k| replicate(&scheme, b, &cached, cfg.seed, k).map(|r| r.result)).collect::<Result<_>>()?;
    let truth = cfg.constants.branching_ratio;

    let times = bin_times(b);
    let mut traces = Table::new("decay_traces", &["power_w", "time_s", "counts", "expected_counts"]);
    for (i, (counts, mean)) in first.traces.iter().enumerate() {
        for k in 0..times.len() {
            traces.push(vec![b.powers_w[i].into(), times[k].into(), counts[k].into(), mean[k].into()]);
        }
    }
    let mut fits = Table::new(
        "decay_fits",
        &["power_w", "saturation_parameter", "b_per_s", "b_stderr_per_s", "amplitude_counts", "background_counts", "reduced_chi2"],
    );
    for (i, f) in first.fits.iter().enumerate() {
        fits.push(vec![
            b.powers_w[i].into(),
            (b.powers_w[i] / b.p_sat_w).into(),
            f.value("b").into(),
            f.stderr("b").into(),
            f.value("A").into(),
            f.value("c").into(),
            f.reduced_chi2.into(),
        ]);
    }
    let mut reps = Table::new("replications", &["replication", "r", "r_stderr", "covers_truth"]);
    let all: Vec<&ReplicationResult> = std::iter::once(&first.result).chain(rest.iter()).collect();
    for r in &all {
        reps.push(vec![r.replication.into(), r.saturation.r.into(), r.saturation.r_stderr.into(), (r.covers(truth) as u64).into()]);
    }
    let coverage = all.iter().filter(|r| r.covers(truth)).count();

    let s = &first.result.saturation;
    let mut art = RunArtifact::new("branching", resolved);
    art.tables.extend([traces, fits, reps]);
    art.documents.push(("saturation_fit".into(), serde_json::to_value(s)?));
    art.derived = json!({
        "r": s.r,
        "r_stderr": s.r_stderr,
        "r_stderr_fit": s.r_stderr_fit,
        "gamma_r_per_s": s.fit.value("gammaR"),
        "p_sat_fit_w": s.fit.value("p_sat"),
        "decay_rates_per_s": float_array(&first.result.decay_rates_per_s),
        "replications": all.len(),
        "replications_covering_truth": coverage,
    });
    Ok(art)
}

/// All replications' saturation results, without assembling tables.
pub fn branching_replications(resolved: &ResolvedConfig) -> Result<Vec<ReplicationResult>> {
    let cfg = &resolved.config;
    let b = &cfg.branching;
    let scheme = build_level_scheme(AtomSpecies::Yb174, cfg.constants.clone())?;
    let cached: Vec<Vec<f64>> = b.powers_w.iter().map(|&p| expected_photons(&scheme, b, p)).collect::<Result<_>>()?;
    (0..b.replications).into_par_iter().map(|k| replicate(&scheme, b, &cached, cfg.seed, k).map(|r| r.result)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentConfig;

    #[test]
    fn expected_trace_decays_monotonically() {
        let cfg = ExperimentConfig::defaults();
        let scheme = build_level_scheme(AtomSpecies::Yb174, cfg.constants.clone()).unwrap();
        let trace = expected_photons(&scheme, &cfg.branching, 29e-6).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace[trace.len() - 1] < 1e-3 * trace[0]);
    }

    #[test]
    fn total_photons_before_shelving_is_one_over_r() {
        // every scattered photon leaks with probability R, so a long window collects 1/R
        let cfg = ExperimentConfig::defaults();
        let scheme = build_level_scheme(AtomSpecies::Yb174, cfg.constants.clone()).unwrap();
        let trace = expected_photons(&scheme, &cfg.branching, 8e-6).unwrap();
        let total: f64 = trace.iter().sum();
        let r = cfg.constants.branching_ratio;
        assert!((total * r / (1.0 - r) - 1.0).abs() < 0.02, "total {total}");
    }
}
