//! Monte-Carlo quantum-jump unraveling of the rate dynamics.
//!
//! Within an interval the atom waits an exponentially distributed time set by the total
//! outflow of its current manifold, then jumps to a destination drawn in proportion to
//! the individual rates. Spontaneous jumps emit a [`PhotonEvent`]. The ²F₇/₂ shelf is
//! left after a fixed repump delay rather than at an exponential time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rates::{build_rate_matrix, f72_return_weights, RateMatrix, RateOptions, Transition, TransitionKind};
use crate::atom::{EmissionClass, LevelScheme, ManifoldId, Term};
use crate::error::{Error, Result};
use crate::field::{validate_timeline, Timeline};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub emission_time_s: f64,
    /// Index into the scheme's decay channels.
    pub channel: usize,
    pub emission: EmissionClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupation {
    pub manifold: ManifoldId,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeakKind {
    /// Pumping through a coupling detuned beyond the off-resonant threshold.
    OffResonantPump,
    /// Trapping into ²F₇/₂.
    F72Trap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakEvent {
    pub time_s: f64,
    pub kind: LeakKind,
    pub from: ManifoldId,
    pub to: ManifoldId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub photons: Vec<PhotonEvent>,
    pub occupations: Vec<Occupation>,
    pub final_manifold: ManifoldId,
    pub leaks: Vec<LeakEvent>,
}

impl TrajectoryResult {
    /// Manifold occupied at time `t`.
    pub fn manifold_at(&self, t: f64) -> Option<ManifoldId> {
        let i = self.occupations.partition_point(|o| o.end_s <= t);
        self.occupations.get(i).filter(|o| o.start_s <= t).map(|o| o.manifold)
    }

    pub fn count(&self, class: EmissionClass) -> usize {
        self.photons.iter().filter(|p| p.emission == class).count()
    }

    /// Photon events as CSV with a header row.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("emission_time_s,channel\n");
        for p in &self.photons {
            out.push_str(&format!("{},{}\n", p.emission_time_s, p.channel));
        }
        out
    }
}

/// Receives every jump of a trajectory, in time order.
pub trait JumpObserver {
    fn jump(&mut self, time: f64, transition: &Transition);
    /// Called once per interval boundary crossed while remaining in `manifold`.
    fn boundary(&mut self, _time: f64, _manifold: ManifoldId) {}
}

/// Counts emitted photons of one class without storing them.
#[derive(Debug, Clone, Copy)]
pub struct PhotonCounter {
    pub class: EmissionClass,
    pub count: u64,
}

impl PhotonCounter {
    pub fn new(class: EmissionClass) -> Self {
        Self { class, count: 0 }
    }
}

impl JumpObserver for PhotonCounter {
    fn jump(&mut self, _time: f64, t: &Transition) {
        if t.emits() == Some(self.class) {
            self.count += 1;
        }
    }
}

struct Recorder {
    photons: Vec<PhotonEvent>,
    occupations: Vec<Occupation>,
    leaks: Vec<LeakEvent>,
    entered: f64,
}

impl JumpObserver for Recorder {
    fn jump(&mut self, time: f64, t: &Transition) {
        self.occupations.push(Occupation { manifold: t.from, start_s: self.entered, end_s: time });
        self.entered = time;
        match t.kind {
            TransitionKind::Spontaneous { channel, emission } => {
                self.photons.push(PhotonEvent { emission_time_s: time, channel, emission })
            }
            TransitionKind::Pump { off_resonant: true } => self.leaks.push(LeakEvent {
                time_s: time,
                kind: LeakKind::OffResonantPump,
                from: t.from,
                to: t.to,
            }),
            TransitionKind::Trap => self.leaks.push(LeakEvent {
                time_s: time,
                kind: LeakKind::F72Trap,
                from: t.from,
                to: t.to,
            }),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Exits {
    total: f64,
    cumulative: Vec<f64>,
    transitions: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CompiledInterval {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
    pub rates: RateMatrix,
    exits: Vec<Exits>,
}

/// A validated timeline with its rate matrices and jump tables precomputed.
#[derive(Debug, Clone)]
pub struct CompiledTimeline {
    pub intervals: Vec<CompiledInterval>,
    dim: usize,
    f72: Option<ManifoldId>,
    repump_delay_s: f64,
    repump_cumulative: Vec<(f64, ManifoldId)>,
}

impl CompiledTimeline {
    /// Builds rate matrices per interval. The interval's dark-state factor overrides `opts.kappa`.
    pub fn new(scheme: &LevelScheme, timeline: &Timeline, opts: &RateOptions) -> Result<Self> {
        validate_timeline(timeline).map_err(|v| {
            let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            Error::constraint("timeline", list.join("; "))
        })?;
        let f72 = scheme.manifolds_of(Term::F72).first().copied();
        let mut intervals = Vec::with_capacity(timeline.intervals.len());
        let mut t = 0.0;
        for interval in &timeline.intervals {
            let interval_opts = RateOptions { kappa: interval.dark_state_factor, ..*opts };
            let rates = build_rate_matrix(scheme, &interval.beams, &interval_opts);
            rates.check_conservative(1e-12)?;
            let mut exits = vec![Exits::default(); scheme.len()];
            for (k, tr) in rates.transitions.iter().enumerate() {
                if tr.rate <= 0.0 || (Some(tr.from) == f72 && tr.kind == TransitionKind::Repump) {
                    continue;
                }
                let e = &mut exits[tr.from.0];
                e.total += tr.rate;
                e.cumulative.push(e.total);
                e.transitions.push(k);
            }
            intervals.push(CompiledInterval {
                label: interval.label.clone(),
                start_s: t,
                end_s: t + interval.duration_s,
                rates,
                exits,
            });
            t += interval.duration_s;
        }
        let mut acc = 0.0;
        let repump_cumulative = f72_return_weights(scheme)
            .into_iter()
            .map(|(m, w)| {
                acc += w;
                (acc, m)
            })
            .collect();
        Ok(Self {
            intervals,
            dim: scheme.len(),
            f72,
            repump_delay_s: scheme.constants.f72_repump_delay_s,
            repump_cumulative,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn duration(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.end_s)
    }

    /// Runs one trajectory, reporting jumps to `observer`; returns the final manifold.
    pub fn run_with<O: JumpObserver>(&self, initial: ManifoldId, rng: &mut ChaCha8Rng, observer: &mut O) -> ManifoldId {
        let mut m = initial;
        let mut t = 0.0;
        // Time at which a ²F₇/₂ shelving ends, when shelved.
        let mut release: Option<f64> = None;
        for interval in &self.intervals {
            loop {
                if let Some(r) = release {
                    if r >= interval.end_s {
                        break;
                    }
                    let u: f64 = rng.random::<f64>() * self.repump_cumulative.last().map_or(1.0, |c| c.0);
                    let to = self
                        .repump_cumulative
                        .iter()
                        .find(|c| u < c.0)
                        .or(self.repump_cumulative.last())
                        .map_or(initial, |c| c.1);
                    let tr = Transition { from: m, to, rate: 1.0 / self.repump_delay_s, kind: TransitionKind::Repump };
                    observer.jump(r, &tr);
                    t = r;
                    m = to;
                    release = None;
                    continue;
                }
                let exits = &interval.exits[m.0];
                if exits.total <= 0.0 {
                    break;
                }
                let wait: f64 = Exp1.sample(rng);
                let next = t + wait / exits.total;
                if next >= interval.end_s {
                    break;
                }
                let u = rng.random::<f64>() * exits.total;
                let k = exits.cumulative.partition_point(|&c| c <= u).min(exits.transitions.len() - 1);
                let tr = &interval.rates.transitions[exits.transitions[k]];
                observer.jump(next, tr);
                t = next;
                m = tr.to;
                if Some(m) == self.f72 {
                    release = Some(t + self.repump_delay_s);
                }
            }
            // memoryless: the residual wait is redrawn under the next interval's rates
            t = interval.end_s;
            observer.boundary(t, m);
        }
        m
    }

    pub fn run(&self, initial: ManifoldId, seed: u64, index: u64) -> TrajectoryResult {
        let mut rng = stream(seed, Domain::Trajectory, index);
        let mut rec = Recorder { photons: Vec::new(), occupations: Vec::new(), leaks: Vec::new(), entered: 0.0 };
        let final_manifold = self.run_with(initial, &mut rng, &mut rec);
        rec.occupations.push(Occupation { manifold: final_manifold, start_s: rec.entered, end_s: self.duration() });
        TrajectoryResult { photons: rec.photons, occupations: rec.occupations, final_manifold, leaks: rec.leaks }
    }

    /// Number of `class` photons emitted in trajectory `index`.
    pub fn count_photons(&self, initial: ManifoldId, class: EmissionClass, seed: u64, index: u64) -> u64 {
        let mut rng = stream(seed, Domain::Trajectory, index);
        let mut counter = PhotonCounter::new(class);
        self.run_with(initial, &mut rng, &mut counter);
        counter.count
    }

    /// Runs trajectories `range` in parallel; element `i` always corresponds to index `range.start + i`.
    pub fn run_many(&self, initial: ManifoldId, seed: u64, range: std::ops::Range<u64>) -> Vec<TrajectoryResult> {
        range.into_par_iter().map(|i| self.run(initial, seed, i)).collect()
    }
}

/// Time spent in each manifold within each of `bins` equal time bins, streamed without
/// storing the trajectory.
#[derive(Debug, Clone)]
pub struct BinnedOccupancy {
    width: f64,
    entered: f64,
    /// `time[bin][manifold]` in seconds.
    pub time: Vec<Vec<f64>>,
}

impl BinnedOccupancy {
    pub fn new(duration_s: f64, bins: usize, dim: usize) -> Self {
        Self { width: duration_s / bins as f64, entered: 0.0, time: vec![vec![0.0; dim]; bins] }
    }

    fn add(&mut self, m: ManifoldId, from: f64, to: f64) {
        let n = self.time.len();
        let mut k = ((from / self.width) as usize).min(n - 1);
        let mut a = from;
        // walking the bin index forward keeps edge rounding from stalling the loop
        while a < to {
            let edge = if k + 1 >= n { to } else { ((k + 1) as f64 * self.width).min(to) };
            if edge > a {
                self.time[k][m.0] += edge - a;
                a = edge;
            }
            k += 1;
        }
    }

    /// Closes the record at `end` with the ion in `m`.
    pub fn finish(&mut self, end: f64, m: ManifoldId) {
        let from = self.entered;
        self.add(m, from, end);
        self.entered = end;
    }
}

impl JumpObserver for BinnedOccupancy {
    fn jump(&mut self, time: f64, t: &Transition) {
        let from = self.entered;
        self.add(t.from, from, time);
        self.entered = time;
    }
}

/// Mean and standard error across trajectories of the bin-averaged occupation of every
/// manifold, indexed `[bin][manifold]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStatistics {
    pub bin_edges_s: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub trajectories: u64,
}

const OCCUPANCY_CHUNK: u64 = 256;

/// Per-bin, per-manifold sums of occupancy and its square.
type MomentSums = (Vec<Vec<f64>>, Vec<Vec<f64>>);

impl CompiledTimeline {
    /// Occupation statistics over trajectories `0..n`. Chunk sums are combined in index
    /// order, so the result does not depend on the thread count.
    pub fn occupancy_statistics(&self, initial: ManifoldId, seed: u64, n: u64, bins: usize) -> OccupancyStatistics {
        let duration = self.duration();
        let dim = self.dim;
        let width = duration / bins as f64;
        let chunks: Vec<MomentSums> = (0..n.div_ceil(OCCUPANCY_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut s1 = vec![vec![0.0; dim]; bins];
                let mut s2 = vec![vec![0.0; dim]; bins];
                for i in c * OCCUPANCY_CHUNK..((c + 1) * OCCUPANCY_CHUNK).min(n) {
                    let mut obs = BinnedOccupancy::new(duration, bins, dim);
                    let last = self.run_with(initial, &mut stream(seed, Domain::Trajectory, i), &mut obs);
                    obs.finish(duration, last);
                    for (k, row) in obs.time.iter().enumerate() {
                        for (m, t) in row.iter().enumerate() {
                            let x = t / width;
                            s1[k][m] += x;
                            s2[k][m] += x * x;
                        }
                    }
                }
                (s1, s2)
            })
            .collect();
        let mut s1 = vec![vec![0.0; dim]; bins];
        let mut s2 = vec![vec![0.0; dim]; bins];
        for (a, b) in &chunks {
            for k in 0..bins {
                for m in 0..dim {
                    s1[k][m] += a[k][m];
                    s2[k][m] += b[k][m];
                }
            }
        }
        let nf = n as f64;
        let mean: Vec<Vec<f64>> = s1.iter().map(|r| r.iter().map(|v| v / nf).collect()).collect();
        let stderr = s2
            .iter()
            .zip(&mean)
            .map(|(r, mu)| {
                r.iter()
                    .zip(mu)
                    .map(|(q, m)| ((q / nf - m * m).max(0.0) * nf / (nf - 1.0).max(1.0) / nf).sqrt())
                    .collect()
            })
            .collect();
        OccupancyStatistics { bin_edges_s: (0..=bins).map(|k| k as f64 * width).collect(), mean, stderr, trajectories: n }
    }
}

/// Simulates one trajectory of `timeline` starting in `initial`.
///
/// Deterministic in `(seed, trajectory_index)`.
pub fn simulate_trajectory(
    scheme: &LevelScheme,
    timeline: &Timeline,
    opts: &RateOptions,
    initial: ManifoldId,
    seed: u64,
    trajectory_index: u64,
) -> Result<TrajectoryResult> {
    Ok(CompiledTimeline::new(scheme, timeline, opts)?.run(initial, seed, trajectory_index))
}

/// Per-bin photon counts of `class` over `[0, duration)` summed across trajectories.
pub fn bin_photons<'a>(
    results: impl IntoIterator<Item = &'a TrajectoryResult>,
    class: EmissionClass,
    bin_width_s: f64,
    duration_s: f64,
) -> Vec<u64> {
    let n = (duration_s / bin_width_s).round() as usize;
    let mut bins = vec![0u64; n];
    for r in results {
        for p in r.photons.iter().filter(|p| p.emission == class) {
            let k = (p.emission_time_s / bin_width_s) as usize;
            if k < n {
                bins[k] += 1;
            }
        }
    }
    bins
}

/// Fraction of trajectories occupying each manifold at each time in `times`.
pub fn occupation_fractions(results: &[TrajectoryResult], dim: usize, times: &[f64]) -> Vec<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            let mut f = vec![0.0; dim];
            for r in results {
                if let Some(m) = r.manifold_at(t) {
                    f[m.0] += 1.0;
                }
            }
            f.iter_mut().for_each(|x| *x /= results.len() as f64);
            f
        })
        .collect()
}
