//! Deterministic random-number substreams.
//!
//! Every replicate of every experiment draws from its own ChaCha8 stream
//! keyed by `(seed, replicate_id, stream)`. Replicates can therefore run on
//! any number of workers in any order and still reproduce bit-identical
//! results; the reducer only ever sees values indexed by replicate id.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named substreams within one replicate, so that paired experiments can
/// share the driving-noise stream while varying the perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    HeavyJumps,
    LightJumps,
    SideField1,
    SideField2,
    Scratch,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::HeavyJumps => 0x68656176,
            Stream::LightJumps => 0x6c696768,
            Stream::SideField1 => 0x73696431,
            Stream::SideField2 => 0x73696432,
            Stream::Scratch => 0x73637261,
        }
    }
}

/// SplitMix64 step; the standard seed-expansion finalizer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for one `(seed, replicate, stream)` triple.
pub fn substream(seed: u64, replicate: u64, stream: Stream) -> ChaCha8Rng {
    let mut state = seed ^ 0xa076_1d64_78bd_642f;
    let a = splitmix64(&mut state);
    state ^= replicate.wrapping_mul(0xe703_7ed1_a0b4_28db);
    let b = splitmix64(&mut state);
    state ^= stream.tag().wrapping_mul(0x8ebc_6af0_9c88_c6e3);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);

    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&c.to_le_bytes());
    key[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
