//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit seed is expanded from a
//! 64-bit key with SplitMix64. Keys are built by chaining `mix` over
//! `(base_seed, cell, trial, lane)`, so any cell or trial can be regenerated
//! on its own without replaying earlier ones. The mixing function is part of
//! the output contract: changing it changes every published result.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a parent key with one more coordinate.
pub fn derive(parent: u64, coordinate: u64) -> u64 {
    mix(parent ^ mix(coordinate))
}

/// Independent purposes inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Common = 1,
    Idiosyncratic = 2,
    Choice = 3,
    DeferredNoInformation = 4,
    DeferredOnlyQuality = 5,
}

/// A single-owner source of uniform variates.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_key(key: u64) -> Self {
        let mut seed = [0u8; 32];
        let mut state = key;
        for chunk in seed.chunks_exact_mut(8) {
            state = mix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Stream for `lane` of trial `trial` under `base_seed`.
    pub fn for_trial(base_seed: u64, trial: u64, lane: Lane) -> Self {
        Self::from_key(derive(derive(base_seed, trial), lane as u64))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the half-open interval (0, 1], 53 bits of resolution.
    pub fn uniform_open0(&mut self) -> f64 {
        let bits = self.next_u64() >> 11;
        (bits + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased integer in `0..bound` (Lemire's multiply-and-reject).
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
