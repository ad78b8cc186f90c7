//! Counter-based random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, tag, index)`. Work items that run in parallel each own a distinct
//! address, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes that own disjoint regions of the stream space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Tag {
    Init = 1,
    Batches = 2,
    TrainAttack = 3,
    EvalAttack = 4,
    Rademacher = 5,
    Data = 6,
    Trial = 7,
    TrainLoss = 8,
    ValLoss = 9,
}

const TAG_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn substream(seed: u64, tag: Tag, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (tag as u64).wrapping_mul(TAG_MIX));
    rng.set_stream(index);
    rng
}

/// Packs two counters into one stream index (`hi` gets the upper 24 bits).
pub fn pair_index(hi: u64, lo: u64) -> u64 {
    (hi << 40) | (lo & ((1 << 40) - 1))
}
