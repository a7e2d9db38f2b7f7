//! Photon counting, threshold state discrimination and detection fidelity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::atom::{EmissionClass, LevelScheme, Term};
use crate::dynamics::rates::{build_rate_matrix, RateOptions, TransitionKind};
use crate::dynamics::trajectory::PhotonEvent;
use crate::dynamics::ode::{PopulationVector, Propagator};
use crate::error::{Error, Result};
use crate::field::DrivenBeam;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub window_s: f64,
    /// Counts strictly above this are classified `|1⟩`.
    pub threshold: u64,
    /// Probability that an emitted 369 nm photon is registered.
    pub efficiency: f64,
    pub dark_rate_per_s: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { window_s: 1e-3, threshold: 1, efficiency: 0.001, dark_rate_per_s: 150.0 }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::constraint("window_s", "must be > 0"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::constraint("efficiency", "must lie in (0, 1]"));
        }
        if !(self.dark_rate_per_s >= 0.0 && self.dark_rate_per_s.is_finite()) {
            return Err(Error::constraint("dark_rate_per_s", "must be >= 0"));
        }
        Ok(())
    }

    pub fn mean_dark_counts(&self) -> f64 {
        self.dark_rate_per_s * self.window_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Zero,
    One,
}

pub fn classify(count: u64, cfg: &DetectionConfig) -> Outcome {
    if count > cfg.threshold {
        Outcome::One
    } else {
        Outcome::Zero
    }
}

/// Registered counts for one shot given `emitted` 369 nm photons: Binomial thinning plus
/// Poisson dark counts. Equivalent in distribution to keeping each photon independently.
pub fn register_counts(emitted: u64, cfg: &DetectionConfig, seed: u64, shot_index: u64) -> u64 {
    let mut rng = stream(seed, Domain::DetectorThinning, shot_index);
    let kept = if emitted == 0 || cfg.efficiency >= 1.0 {
        if cfg.efficiency >= 1.0 { emitted } else { 0 }
    } else {
        Binomial::new(emitted, cfg.efficiency).expect("validated efficiency").sample(&mut rng)
    };
    let lambda = cfg.mean_dark_counts();
    let dark = if lambda > 0.0 { Poisson::new(lambda).expect("positive mean").sample(&mut rng) as u64 } else { 0 };
    kept + dark
}

/// Counts registered from the 369 nm events of one shot that fall inside the window.
pub fn detect_counts(events: &[PhotonEvent], window_start_s: f64, cfg: &DetectionConfig, seed: u64, shot_index: u64) -> u64 {
    let emitted = events
        .iter()
        .filter(|e| e.emission == EmissionClass::Nm369)
        .filter(|e| e.emission_time_s >= window_start_s && e.emission_time_s < window_start_s + cfg.window_s)
        .count() as u64;
    register_counts(emitted, cfg, seed, shot_index)
}

/// Tally of counts per shot. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub occurrences: BTreeMap<u64, u64>,
    pub shots: u64,
}

impl Histogram {
    pub fn add(&mut self, count: u64) {
        *self.occurrences.entry(count).or_insert(0) += 1;
        self.shots += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&k, &v) in &other.occurrences {
            *self.occurrences.entry(k).or_insert(0) += v;
        }
        self.shots += other.shots;
    }

    pub fn is_empty(&self) -> bool {
        self.shots == 0
    }

    /// Shots with a count strictly above `threshold`.
    pub fn above(&self, threshold: u64) -> u64 {
        self.occurrences.range(threshold + 1..).map(|(_, v)| v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.occurrences.iter().map(|(&k, &v)| k as f64 * v as f64).sum::<f64>() / self.shots as f64
    }

    pub fn mode(&self) -> Option<u64> {
        self.occurrences.iter().max_by_key(|(k, v)| (**v, std::cmp::Reverse(**k))).map(|(k, _)| *k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("count,occurrences\n");
        for (k, v) in &self.occurrences {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

pub fn accumulate_histogram(counts: &[u64]) -> Histogram {
    let mut h = Histogram::default();
    counts.iter().for_each(|&c| h.add(c));
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity_dark: f64,
    pub fidelity_bright: f64,
    pub average: f64,
    pub stderr_dark: f64,
    pub stderr_bright: f64,
    pub stderr_average: f64,
    pub threshold: u64,
    pub shots_dark: u64,
    pub shots_bright: u64,
}

/// Binomial standard error with add-one smoothing so it stays positive at p = 0 or 1.
fn binomial_stderr(successes: u64, n: u64) -> f64 {
    let p = (successes as f64 + 1.0) / (n as f64 + 2.0);
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn estimate_fidelity(dark: &Histogram, bright: &Histogram, cfg: &DetectionConfig) -> Result<FidelityReport> {
    if dark.is_empty() || bright.is_empty() {
        return Err(Error::InsufficientData("both histograms need at least one shot".into()));
    }
    let correct_dark = dark.shots - dark.above(cfg.threshold);
    let correct_bright = bright.above(cfg.threshold);
    let fd = correct_dark as f64 / dark.shots as f64;
    let fb = correct_bright as f64 / bright.shots as f64;
    let sd = binomial_stderr(correct_dark, dark.shots);
    let sb = binomial_stderr(correct_bright, bright.shots);
    Ok(FidelityReport {
        fidelity_dark: fd,
        fidelity_bright: fb,
        average: 0.5 * (fd + fb),
        stderr_dark: sd,
        stderr_bright: sb,
        stderr_average: 0.5 * (sd * sd + sb * sb).sqrt(),
        threshold: cfg.threshold,
        shots_dark: dark.shots,
        shots_bright: bright.shots,
    })
}

/// Average fidelity for every threshold in `0..=max_threshold`.
pub fn threshold_sweep(dark: &Histogram, bright: &Histogram, cfg: &DetectionConfig, max_threshold: u64) -> Result<Vec<FidelityReport>> {
    (0..=max_threshold)
        .map(|threshold| estimate_fidelity(dark, bright, &DetectionConfig { threshold, ..*cfg }))
        .collect()
}

/// Per-photon pump-out probability of the bright state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakModel {
    /// Leak probability per scattered photon at the natural scattering rate.
    pub q_leak: f64,
    /// Scattering is reduced by coherent dark states while the leak rate is not, which
    /// triples the leak per scattered photon.
    pub kappa_applied: bool,
}

impl LeakModel {
    pub fn q_effective(&self) -> f64 {
        if self.kappa_applied {
            3.0 * self.q_leak
        } else {
            self.q_leak
        }
    }

    /// Solves `theoretical_fidelity(efficiency) = fidelity` for `q_leak`.
    pub fn calibrate(efficiency: f64, fidelity: f64, kappa_applied: bool) -> Result<Self> {
        let e = 1.0 - fidelity;
        if !(e > 0.0 && e < 1.0) || !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::constraint("fidelity", "calibration point must lie in (0, 1)"));
        }
        // (1+2μ)/(1+μ)² = e  ⇒  e μ² − 2(1−e) μ − (1−e) = 0
        let mu = ((1.0 - e) + (1.0 - e).sqrt()) / e;
        let q_eff = efficiency / mu;
        let q_leak = if kappa_applied { q_eff / 3.0 } else { q_eff };
        Ok(Self { q_leak, kappa_applied })
    }

    pub fn with_kappa(self, kappa_applied: bool) -> Self {
        Self { kappa_applied, ..self }
    }
}

/// Infinite-window race between detection (probability η per photon) and leaking (q per
/// photon): the shot is misread when at most one photon is detected before the leak.
/// With μ = η/q the error is `(1+2μ)/(1+μ)²`.
pub fn theoretical_fidelity(efficiency: f64, leak: &LeakModel) -> f64 {
    let mu = efficiency / leak.q_effective();
    1.0 - (1.0 + 2.0 * mu) / ((1.0 + mu) * (1.0 + mu))
}

fn poisson_cdf(k: u64, lambda: f64) -> f64 {
    let mut term = (-lambda).exp();
    let mut sum = term;
    for i in 1..=k {
        term *= lambda / i as f64;
        sum += term;
    }
    sum
}

/// Expected fidelities over a finite window with dark counts: the bright ion scatters at
/// `photon_rate` until it leaks (probability `q_eff` per photon); the dark ion only
/// produces dark counts. Returns `(fidelity_dark, fidelity_bright)`.
pub fn finite_window_fidelity(cfg: &DetectionConfig, photon_rate: f64, q_eff: f64) -> (f64, f64) {
    let d = cfg.mean_dark_counts();
    let t = cfg.window_s;
    let fd = poisson_cdf(cfg.threshold, d);
    let leak_rate = photon_rate * q_eff;
    let miss = |tau: f64| poisson_cdf(cfg.threshold, cfg.efficiency * photon_rate * tau + d);
    // Simpson over the leak-time density λe^{−λτ} on [0, T]
    let n = 4000;
    let h = t / n as f64;
    let f = |i: usize| {
        let tau = i as f64 * h;
        leak_rate * (-leak_rate * tau).exp() * miss(tau)
    };
    let mut integral = f(0) + f(n);
    for i in 1..n {
        integral += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    integral *= h / 3.0;
    let error_bright = integral + (-leak_rate * t).exp() * miss(t);
    (fd, 1.0 - error_bright)
}

/// Efficiency at which [`finite_window_fidelity`] averages to `target`, by bisection.
pub fn calibrate_efficiency(cfg: &DetectionConfig, photon_rate: f64, q_eff: f64, target: f64) -> Result<f64> {
    let avg = |eta: f64| {
        let (fd, fb) = finite_window_fidelity(&DetectionConfig { efficiency: eta, ..*cfg }, photon_rate, q_eff);
        0.5 * (fd + fb)
    };
    let (mut lo, mut hi) = (1e-7, 1.0);
    if !(avg(lo) < target && avg(hi) > target) {
        return Err(Error::constraint("target_fidelity", format!("{target} is not reachable by tuning efficiency")));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if avg(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Bright-state photon emission and leak figures under a detection field, from the rate
/// model with the off-resonant weight set to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightStateRates {
    /// 369 nm emission rate averaged over the window, leak excluded.
    pub photon_rate: f64,
    /// Rate of off-resonant pumping into the ²P₁/₂ F=1 manifold from |1⟩, times the
    /// fraction of its decays that land in |0⟩, at unit weight.
    pub leak_rate: f64,
}

impl BrightStateRates {
    /// Leak probability per emitted 369 nm photon.
    pub fn q_per_photon(&self) -> f64 {
        self.leak_rate / self.photon_rate
    }
}

pub fn bright_state_rates(scheme: &LevelScheme, beams: &[DrivenBeam], kappa: f64, window_s: f64) -> Result<BrightStateRates> {
    let (q0, q1) = scheme.qubit_manifolds();
    let p1 = scheme
        .find(Term::P12, 2)
        .ok_or_else(|| Error::constraint("species", "bright-state leak needs the ¹⁷¹Yb⁺ scheme"))?;
    let opts = RateOptions { kappa, off_resonant_weight: 1.0, ..Default::default() };
    let full = build_rate_matrix(scheme, beams, &opts);
    let off = |t: &&crate::dynamics::rates::Transition| t.from == q1 && t.to == p1 && t.kind == TransitionKind::Pump { off_resonant: true };
    let w_off: f64 = full.transitions.iter().filter(off).map(|t| t.rate).sum();
    let to_dark: f64 = scheme.channels_from(p1).filter(|c| c.lower == q0).map(|c| c.branching_fraction).sum();

    // photon rate and |1⟩ occupancy without any leak
    let closed = build_rate_matrix(scheme, beams, &RateOptions { off_resonant_weight: 0.0, ..opts });
    let prop = Propagator::new(&closed, window_s)?;
    let integral = prop.integrate(&PopulationVector::pure(scheme.len(), q1.0));
    let emitted: f64 = closed
        .transitions
        .iter()
        .filter(|t| t.emits() == Some(EmissionClass::Nm369))
        .map(|t| t.rate * integral[t.from.0])
        .sum();
    let time_in_q1 = integral[q1.0];
    Ok(BrightStateRates { photon_rate: emitted / window_s, leak_rate: w_off * to_dark * time_in_q1 / window_s })
}

/// Scalar weight on off-resonant couplings that makes the simulated per-photon leak
/// equal `leak.q_effective()`.
pub fn calibrate_leak_weight(rates: &BrightStateRates, leak: &LeakModel) -> f64 {
    leak.q_effective() / rates.q_per_photon()
}
