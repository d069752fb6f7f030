//! Counter-based random streams.
//!
//! Every random draw in the simulator is keyed by `(master seed, purpose,
//! agent id, counter)`. A fresh ChaCha generator is seeded from a SplitMix64
//! mix of that tuple, so draws do not depend on call order or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Exploration = 1,
    InitialState = 2,
    MeasurementNoise = 3,
    Graph = 4,
    Targets = 5,
    Momentum = 6,
    MonteCarlo = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a generator for one `(seed, purpose, agent, counter)` cell.
pub fn stream(seed: u64, purpose: Purpose, agent: u64, counter: u64) -> ChaCha8Rng {
    let mut key = splitmix64(seed);
    key = splitmix64(key ^ purpose as u64);
    key = splitmix64(key ^ agent);
    key = splitmix64(key ^ counter);
    ChaCha8Rng::seed_from_u64(key)
}

/// `len` independent standard normal draws.
pub fn standard_normal_vec<R: rand::Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}
