//! End-to-end measurement pipelines, their configuration and their output artifacts.

pub mod artifact;
pub mod branching;
pub mod config;
pub mod detection;
pub mod hyperfine;
pub mod rabi;
pub mod ramsey;
pub mod state_prep;

use std::time::Instant;

pub use artifact::{OutputFormat, RunArtifact, Table};
pub use branching::run_branching;
pub use config::{ExperimentConfig, Overrides, ResolvedConfig, Scenario};
pub use detection::run_detection;
pub use hyperfine::run_hyperfine_scan;
pub use rabi::run_rabi;
pub use ramsey::run_ramsey;
pub use state_prep::run_state_prep;

use crate::error::Result;

/// Runs `scenario` and stamps the wall time.
pub fn run(scenario: Scenario, resolved: &ResolvedConfig) -> Result<RunArtifact> {
    let start = Instant::now();
    let mut art = match scenario {
        Scenario::Detection => run_detection(resolved),
        Scenario::Rabi => run_rabi(resolved),
        Scenario::Branching => run_branching(resolved),
        Scenario::Hyperfine => run_hyperfine_scan(resolved),
        Scenario::Ramsey => run_ramsey(resolved),
    }?;
    art.wall_time_s = start.elapsed().as_secs_f64();
    Ok(art)
}
