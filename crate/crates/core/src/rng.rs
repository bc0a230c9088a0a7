//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, purpose, index)`. ChaCha is counter based, so a stream's output
//! depends only on its address, never on which thread consumed it or in what
//! order sibling streams were used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream families. The purpose occupies the high 24 bits of the ChaCha
/// stream id; the low 40 bits index replicates within the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Dataset = 1,
    Probe = 2,
    Init = 3,
    MonteCarlo = 4,
    Replicate = 5,
    Pilot = 6,
    Experiment = 7,
}

const INDEX_BITS: u32 = 40;

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    debug_assert!(index < (1 << INDEX_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << INDEX_BITS) | index);
    rng
}

/// Derives an independent child seed, for handing a fresh seed to a nested
/// routine that does its own stream bookkeeping.
pub fn child_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, purpose, index).next_u64()
}
