//! Deterministic randomness primitives.
//!
//! The permutation behind [`crate::dataset::split`] is part of the on-disk
//! contract: a given `(seed, record count)` must produce the same shuffle on
//! every platform and in every release. To keep that promise self-contained,
//! both the generator and the index sampling are spelled out here instead of
//! delegated to an external crate:
//!
//! * Stream: SplitMix64. The state advances by the golden-ratio increment
//!   `0x9E3779B97F4A7C15` per draw and each output is the finalized mix of
//!   the new state.
//! * Bounded draws: rejection sampling. 64-bit words below
//!   `2^64 mod bound` are discarded, then the survivor is reduced modulo
//!   `bound`, so every index is equally likely.
//! * Shuffle: Fisher–Yates, walking `i = n-1 .. 1` and swapping with a
//!   bounded draw `j` in `0..=i`.
//!
//! [`SplitMix64`] also implements [`rand::RngCore`] so the simulation module
//! can drive distribution sampling from the same seeded stream.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream generator (Steele, Lea & Flood's `SplittableRandom`).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// The `index`-th derived seed: output number `index + 1` of the SplitMix64
/// stream seeded with `seed`. Used to hand independent trials their own
/// reproducible sub-streams.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Unbiased draw from `0..bound` by rejecting the truncated residue zone.
fn bounded(rng: &mut SplitMix64, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = bound.wrapping_neg() % bound; // 2^64 mod bound
    loop {
        let v = rng.next();
        if v >= zone {
            return v % bound;
        }
    }
}

/// Seeded Fisher–Yates permutation of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..n).rev() {
        let j = bounded(&mut rng, (i + 1) as u64) as usize;
        indices.swap(i, j);
    }
    indices
}
