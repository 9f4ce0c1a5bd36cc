//! Counter-based derivation of independent RNG streams from a master seed.
//!
//! Every randomized procedure in the crate draws from a ChaCha stream
//! addressed by `(master_seed, stream)`. Sub-seeds are obtained with
//! [`derive_seed`], so components (per-tree fits, per-fold fits, per-stage
//! subsamples) can be re-run in isolation and parallel execution produces
//! the same results as serial execution.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// RNG for stream `stream` of the generator seeded by `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// A sub-seed for a named component: the first word of stream `stream`.
pub fn derive_seed(master_seed: u64, stream: u64) -> u64 {
    stream_rng(master_seed, stream).next_u64()
}
