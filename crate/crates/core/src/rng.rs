//! Deterministic random substreams.
//!
//! Every stochastic draw in a sweep comes from a ChaCha20 generator keyed by
//! the master seed (expanded with `seed_from_u64`, i.e. PCG32 key expansion)
//! and positioned on its own 64-bit ChaCha stream:
//!
//! ```text
//! stream_id = (trial << 8) | purpose
//! ```
//!
//! Streams never overlap, so a trial's numbers do not depend on how many
//! other trials exist, in which order they run, or on how many threads run them.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// What a substream is used for. The discriminant is the low byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Channel = 0,
    Random = 1,
    RanC = 2,
    Dftc = 3,
    Wdft = 4,
    Ewdft = 5,
}

pub fn substream(master_seed: u64, trial: u64, purpose: Purpose) -> SimRng {
    assert!(trial < (1 << 56), "trial index out of range");
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}
