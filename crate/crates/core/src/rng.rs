//! Deterministic random streams.
//!
//! Every random quantity in the crate derives from one 64-bit seed. A stream
//! is addressed by the seed plus a path of counters (time index, probe index,
//! path index, ...), so results do not depend on how work is scheduled
//! across threads.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Well-known stream tags, so unrelated consumers of one seed never collide.
pub mod tag {
    pub const PROBES: u64 = 1;
    pub const PATHS: u64 = 2;
    pub const INITIAL: u64 = 3;
    pub const SET_SAMPLES: u64 = 4;
    pub const PAIRS: u64 = 5;
    pub const TARGET: u64 = 6;
    pub const INSTANCES: u64 = 7;
    pub const VALIDATION: u64 = 8;
}

/// Independent generator for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut key = [0u8; 32];
    let mut s = splitmix64(seed);
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&s.to_le_bytes());
        s = splitmix64(s);
    }
    let id = path.iter().fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)));
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id);
    rng
}

pub fn standard_normal(rng: &mut StreamRng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

/// Radical-inverse Halton point (bases 2, 3, 5, ...) in [0,1)^dim.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    (0..dim)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index + 1;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}
