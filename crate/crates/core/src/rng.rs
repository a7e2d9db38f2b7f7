//! Seeded, collision-free random streams.
//!
//! Every stochastic quantity is drawn from a stream addressed by
//! `(master seed, domain, index)`. The master seed and domain are mixed into a
//! ChaCha key, and the index selects one of the cipher's 2^64 independent
//! streams, so results never depend on which thread consumes which stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Trajectory = 1,
    DetectorThinning = 2,
    ShotDetuning = 3,
    BornSampling = 4,
    PhaseScramble = 5,
    CountNoise = 6,
    PowerJitter = 7,
    Replication = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, domain, index)` triple.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(domain as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Derives a child master seed, e.g. one per bootstrap replica.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(Domain::Replication as u64)) ^ index)
}
