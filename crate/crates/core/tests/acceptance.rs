//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

use std::time::Instant;

use rayon::ThreadPoolBuilder;
use statrs::distribution::{DiscreteCDF, Poisson};

use ybsim::atom::{build_level_scheme, AtomSpecies, Term};
use ybsim::detection::{theoretical_fidelity, LeakModel};
use ybsim::dynamics::{build_rate_matrix, CompiledTimeline, PopulationVector, Propagator, RateOptions};
use ybsim::experiments::branching::{bin_times, branching_replications, expected_counts, expected_photons, fit_decay, poisson_counts};
use ybsim::experiments::{self, ResolvedConfig, Scenario};
use ybsim::field::{DrivenBeam, Interval, LaserBeam, Timeline};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn defaults() -> ResolvedConfig {
    ResolvedConfig::from_toml_str("").unwrap()
}

fn fidelity_table() -> Outcome {
    let leak = LeakModel::calibrate(0.003, 0.9951, true).map_err(|e| e.to_string())?;
    let rows = [(0.001, 0.9855), (0.01, 0.9985), (0.03, 0.9995), (0.1, 0.99985)];
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (eta, want) in rows {
        let got = theoretical_fidelity(eta, &leak);
        worst = worst.max((got - want).abs());
        detail.push(format!("{eta}: {:.3}%", 100.0 * got));
    }
    let off = theoretical_fidelity(0.001, &leak.with_kappa(false));
    let worst = worst.max((off - 0.9951).abs());
    detail.push(format!("kappa off at 0.001: {:.3}%", 100.0 * off));
    check(worst <= 0.0005, format!("{}; worst deviation {:.4} pp", detail.join(", "), 100.0 * worst))
}

fn branching_ratio() -> Outcome {
    let truth = 0.00501;
    let resolved = ResolvedConfig::from_toml_str("[branching]\nreplications = 100\n").map_err(|e| e.to_string())?;
    let c = &resolved.config.branching;
    if c.powers_w.len() != 6 || c.repetitions < 1_000_000 {
        return Err("configuration is not the six-power, 10^6 repetition experiment".into());
    }
    let reps = branching_replications(&resolved).map_err(|e| e.to_string())?;
    let first = &reps[0].saturation;
    let rel = (first.r - truth).abs() / truth;
    let covered = reps.iter().filter(|r| r.covers(truth)).count();
    check(
        rel <= 0.02 && covered >= 90,
        format!("R = {:.5} ± {:.5} ({:.2}% off); 1σ covers truth in {covered}/100", first.r, first.r_stderr, 100.0 * rel),
    )
}

fn saturation_limit() -> Outcome {
    let resolved = defaults();
    let cfg = &resolved.config;
    let b = &cfg.branching;
    let scheme = build_level_scheme(AtomSpecies::Yb174, cfg.constants.clone()).unwrap();
    let s = 1000.0;
    let photons = expected_photons(&scheme, b, s * b.p_sat_w).map_err(|e| e.to_string())?;
    let counts = poisson_counts(&expected_counts(&photons, b), cfg.seed, 0);
    let fit = fit_decay(&bin_times(b), &counts).map_err(|e| e.to_string())?;
    let oracle = 0.00501 / 8.07e-9 / 2.0;
    let rel = (fit.value("b") - oracle).abs() / oracle;
    check(rel <= 0.005, format!("s = {s}: b = {:.5e} ± {:.1e} /s vs {oracle:.5e} ({:.3}% off)", fit.value("b"), fit.stderr("b"), 100.0 * rel))
}

fn detection() -> Outcome {
    let dark_cfg = ResolvedConfig::from_toml_str(
        "[detector]\ndark_rate_per_s = 150.0\nwindow_s = 1e-3\n\
         [detection]\nleak_channels = false\nefficiency_mode = \"fixed\"\nshots_dark = 100000\nshots_bright = 1000\n",
    )
    .map_err(|e| e.to_string())?;
    let dark = experiments::run(Scenario::Detection, &dark_cfg).map_err(|e| e.to_string())?;
    let fd = dark.derived_f64("fidelity_dark").unwrap();
    let oracle = Poisson::new(0.15).unwrap().cdf(1);
    let ok_dark = (fd - oracle).abs() <= 0.001;

    let stated = experiments::run(Scenario::Detection, &defaults()).map_err(|e| e.to_string())?;
    let avg = stated.derived_f64("fidelity_average").unwrap();
    let ok_avg = (0.97..=0.99).contains(&avg);
    check(
        ok_dark && ok_avg,
        format!(
            "dark {:.3}% vs Poisson {:.3}% (10^5 shots); 15290/16497 shots at efficiency {:.2e}: average {:.2}%",
            100.0 * fd,
            100.0 * oracle,
            stated.derived_f64("efficiency").unwrap(),
            100.0 * avg
        ),
    )
}

fn rabi() -> Outcome {
    let resolved = defaults();
    if resolved.config.rabi.shots_per_point != 1000 {
        return Err("expected 1000 shots per point".into());
    }
    let art = experiments::run(Scenario::Rabi, &resolved).map_err(|e| e.to_string())?;
    let t = art.derived_f64("pi_time_s").unwrap();
    let rel = (t - 6.0e-6).abs() / 6.0e-6;
    check(rel <= 0.01, format!("π time {:.4} µs ({:.2}% off)", t * 1e6, 100.0 * rel))
}

fn ramsey() -> Outcome {
    let art = experiments::run(Scenario::Ramsey, &defaults()).map_err(|e| e.to_string())?;
    let amp = art.derived_f64("amplitude_t0").unwrap();
    let period = art.derived_f64("fringe_period_s").unwrap();
    let tau = art.derived_f64("tau_s").unwrap();
    let single = art.derived_f64("single_ion_amplitude_max").unwrap();
    let want_period = 1.0 / 2430.0;
    let ok = (amp - 0.5).abs() <= 0.02 && (period - want_period).abs() <= 0.01 * want_period && (tau - 2.5).abs() <= 0.25 && single < 0.02;
    check(
        ok,
        format!("T=0 amplitude {amp:.4}, period {:.2} µs, tau {tau:.3} s, single-ion amplitude ≤ {single:.4}", period * 1e6),
    )
}

fn hyperfine() -> Outcome {
    let resolved = defaults();
    let step = resolved.config.hyperfine.rf_scan_hz.step;
    let art = experiments::run(Scenario::Hyperfine, &resolved).map_err(|e| e.to_string())?;
    let a = art.derived_f64("splitting_3d_half_hz").unwrap();
    let d = art.derived_f64("splitting_d3_2_hz").unwrap();
    let ok = (a - 2.2095e9).abs() <= 2.0 * step && (d - 0.86e9).abs() <= 2.0 * step;
    check(ok, format!("3D[3/2]1/2 {:.4} GHz, D3/2 {:.4} GHz (step {:.0} MHz)", a / 1e9, d / 1e9, step / 1e6))
}

/// Bin-averaged ODE populations over a piecewise-constant timeline.
fn ode_bin_average(scheme: &ybsim::atom::LevelScheme, tl: &Timeline, p0: &PopulationVector, edges: &[f64]) -> Vec<Vec<f64>> {
    let bounds = tl.boundaries();
    let matrices: Vec<_> = tl.intervals.iter().map(|i| build_rate_matrix(scheme, &i.beams, &RateOptions::default())).collect();
    let mut p = p0.clone();
    let mut t = 0.0;
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let mut acc = vec![0.0; scheme.len()];
        while t < w[1] - 1e-15 {
            let k = bounds.partition_point(|&b| b <= t + 1e-15) - 1;
            let end = w[1].min(bounds[k + 1]);
            let prop = Propagator::new(&matrices[k], end - t).unwrap();
            for (a, v) in acc.iter_mut().zip(prop.integrate(&p)) {
                *a += v;
            }
            p = prop.advance(&p);
            t = end;
        }
        out.push(acc.iter().map(|v| v / (w[1] - w[0])).collect());
    }
    out
}

fn engines() -> Outcome {
    let cfg = defaults().config;
    let b = &cfg.branching;
    let scheme = build_level_scheme(AtomSpecies::Yb174, cfg.constants.clone()).unwrap();
    let probe = DrivenBeam::new(LaserBeam { power_w: b.p_sat_w, ..b.probe.clone() });
    let tl = Timeline::new(vec![
        Interval::optical("repump", b.repump_interval_s, vec![probe.clone(), DrivenBeam::new(b.repump.clone())]),
        Interval::optical("collect", b.collect_interval_s, vec![probe]),
    ]);
    let compiled = CompiledTimeline::new(&scheme, &tl, &RateOptions::default()).unwrap();
    let s = scheme.manifolds_of(Term::S12)[0];
    let n = 10_000;
    let stats = compiled.occupancy_statistics(s, cfg.seed, n, 10);
    let ode = ode_bin_average(&scheme, &tl, &PopulationVector::pure(scheme.len(), s.0), &stats.bin_edges_s);
    let mut worst: f64 = 0.0;
    let mut worst_at = (0, 0);
    let mut compared = 0;
    let mut agree = true;
    for (k, row) in ode.iter().enumerate() {
        for (m, &want) in row.iter().enumerate() {
            let (mean, se) = (stats.mean[k][m], stats.stderr[k][m]);
            if se > 0.0 {
                let z = (mean - want).abs() / se;
                if z > worst {
                    worst = z;
                    worst_at = (k, m);
                }
                agree &= z <= 3.0;
                compared += 1;
            } else {
                // never visited in any trajectory: the expected occupation must be negligible
                agree &= want * n as f64 <= 3.0;
            }
        }
    }

    let collect = build_rate_matrix(&scheme, &tl.intervals[0].beams, &RateOptions::default());
    let prop = Propagator::new(&collect, 16e-9).unwrap();
    let mut p = PopulationVector::pure(scheme.len(), s.0);
    let mut drift: f64 = 0.0;
    for _ in 0..100_000 {
        p = prop.advance(&p);
        drift = drift.max((p.total() - 1.0).abs());
    }

    let run_in = |threads: usize| {
        let pool = ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let events: String = compiled.run_many(s, cfg.seed, 0..200).iter().map(|r| r.events_csv()).collect();
            let occ = compiled.occupancy_statistics(s, cfg.seed, 1000, 10);
            (events, serde_json::to_string(&occ).unwrap())
        })
    };
    let identical = run_in(1) == run_in(4);
    check(
        agree && drift <= 1e-9 && identical,
        format!(
            "{compared} bin/manifold pairs at 10^4 trajectories, worst |z| = {worst:.3} (bin {}, manifold {}); ODE drift {drift:.1e} over 10^5 steps; 1 vs 4 threads identical: {identical}",
            worst_at.0, worst_at.1
        ),
    )
}

fn state_prep() -> Outcome {
    let resolved = defaults();
    let art = experiments::run_state_prep(&resolved).map_err(|e| e.to_string())?;
    let p = art.derived_f64("p_zero_final").unwrap();
    let t = art.derived_f64("duration_s").unwrap();
    check(p > 0.999 && t <= 500e-9, format!("P(|0⟩) = {p:.6} after {:.0} ns", t * 1e9))
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture; a bare filter selects criteria
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "detection fidelity table", fidelity_table),
        (2, "branching-ratio pipeline", branching_ratio),
        (3, "saturation-limit decay rate", saturation_limit),
        (4, "detection fidelity", detection),
        (5, "Rabi π time", rabi),
        (6, "Ramsey coherence", ramsey),
        (7, "hyperfine scans", hyperfine),
        (8, "engine equivalence and conservation", engines),
        (9, "state preparation", state_prep),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n} PASS [{name}] {d} ({secs:.1} s)"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} FAIL [{name}] {d} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
