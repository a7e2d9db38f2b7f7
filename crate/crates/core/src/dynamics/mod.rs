//! Rate-equation, Monte-Carlo and coherent qubit dynamics.

pub mod ode;
pub mod qubit;
pub mod rates;
pub mod trajectory;

pub use ode::{evolve_populations, evolve_sampled, steady_state, PopulationVector, Propagator};
pub use qubit::{apply_pulse, precess, sample_outcome, sample_shot_detuning, QubitState};
pub use rates::{build_rate_matrix, excited_population, pump_rate, scattering_rate, RateMatrix, RateOptions};
pub use trajectory::{simulate_trajectory, BinnedOccupancy, CompiledTimeline, OccupancyStatistics, PhotonEvent, TrajectoryResult};
