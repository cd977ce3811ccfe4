//! Deterministic stream derivation: every (seed, stream, slot) triple maps
//! to an independent ChaCha8 state, so slots are reproducible in isolation
//! and streams never alias each other.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_WORKLOAD: u64 = 0x01;
pub(crate) const STREAM_BORROW: u64 = 0x02;

#[inline]
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_rng(seed: u64, stream: u64, slot: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream.rotate_left(17) ^ slot.rotate_left(41);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
