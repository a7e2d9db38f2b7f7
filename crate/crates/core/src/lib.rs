//! Simulation of a trapped Yb⁺ hyperfine qubit: level structure, laser and microwave
//! fields, rate-equation and quantum-jump dynamics, photon-counting detection, curve
//! fitting, and the measurement pipelines built on them.

pub mod analysis;
pub mod atom;
pub mod detection;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod rng;

pub use error::{Error, Result};
