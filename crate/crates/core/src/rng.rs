//! Reproducible RNG substreams.
//!
//! Parallel work units (a column of `Z`, a block of rows) each draw from a
//! ChaCha stream keyed by `(root seed, tag)` and selected by the unit index,
//! so output never depends on how many workers run the units.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Rows per independently seeded block in row-parallel sweeps.
pub const ROW_BLOCK: usize = 256;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream `index` of the generator keyed by `(seed, tag)`.
pub fn substream(seed: u64, tag: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)));
    rng.set_stream(index);
    rng
}

/// Draws a fresh key from `rng` for a family of substreams.
pub fn fork_key<R: RngCore + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
