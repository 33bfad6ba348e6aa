//! Seeded RNG streams.
//!
//! Every source of randomness in the crate derives from a user seed plus a
//! stream tag and index, so any epoch / image / fit can be regenerated in
//! isolation. This is what makes training resumable and bitwise reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_DROPOUT: u64 = 3;
pub const STREAM_MANIFEST: u64 = 4;
pub const STREAM_SYNTH: u64 = 5;
pub const STREAM_KMEANS: u64 = 6;

/// Derives an independent generator for (`seed`, `stream`, `index`).
///
/// `index` must fit in 56 bits; stream tags occupy the top byte.
pub fn derive_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    assert!(index < 1 << 56, "rng index out of range");
    assert!(stream < 256, "rng stream tag out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 56) | index);
    rng
}
