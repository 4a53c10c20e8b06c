//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! `(seed, stream)` pair, so adding draws in one place never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

/// Initial point of a run.
pub const STREAM_INIT: u64 = 0;
/// Index sampling inside an optimizer.
pub const STREAM_SAMPLING: u64 = 1;
/// Selection of the returned iterate.
pub const STREAM_OUTPUT: u64 = 2;
/// Orthonormal factors of synthetic instances.
pub const STREAM_BASIS_LEFT: u64 = 10;
pub const STREAM_BASIS_RIGHT: u64 = 11;
/// Diagnostic probes.
pub const STREAM_PROBE: u64 = 20;

pub fn stream(seed: u64, stream: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a sub-index (stage, worker, ...) into a seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
