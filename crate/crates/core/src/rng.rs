//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a stream identified by
//! `(seed, domain, index)`. The key is expanded from `(seed, domain)` and the
//! index selects a ChaCha stream, so trial `t` never depends on how many
//! draws trial `t - 1` made, or on which worker evaluated it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes that must never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Permutation = 0x7065_726d,
    Mask = 0x6d61_736b,
    TrainingMask = 0x7472_6d6b,
    Residual = 0x7265_7364,
    BiasSimulation = 0x6269_6173,
    BasisInit = 0x696e_6974,
    Synthetic = 0x7379_6e74,
    Spectral = 0x7370_6563,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ (domain as u64).rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
