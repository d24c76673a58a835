//! Counter-based deterministic RNG.
//!
//! Noise must be reproducible and independent of pixel evaluation order, so
//! each (seed, stream-word...) tuple gets its own SplitMix64 generator. Two
//! renders of the same frame produce identical bytes whether pixels run
//! serially or in parallel, because no generator state is shared.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A SplitMix64 stream keyed by a seed plus an arbitrary list of stream words
/// (e.g. slice index and pixel index).
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    /// Derives an independent stream from `seed` and the given words.
    pub fn for_stream(seed: u64, words: &[u64]) -> Self {
        let mut state = seed;
        // One mixing round per word decorrelates nearby (seed, word) tuples.
        let _ = splitmix64(&mut state);
        for &w in words {
            state ^= w.wrapping_mul(GOLDEN_GAMMA) ^ GOLDEN_GAMMA;
            let _ = splitmix64(&mut state);
        }
        CounterRng { state }
    }
}

/// A single 64-bit value derived from `(seed, words...)`; used to fan a
/// master seed out into independent sub-seeds (e.g. one per frame).
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    CounterRng::for_stream(seed, words).next_u64()
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        let mut chunks = dst.chunks_exact_mut(8);
        for chunk in &mut chunks {
            chunk.copy_from_slice(&self.next_u64().to_le_bytes());
        }
        let rem = chunks.into_remainder();
        if !rem.is_empty() {
            let bytes = self.next_u64().to_le_bytes();
            rem.copy_from_slice(&bytes[..rem.len()]);
        }
    }
}
