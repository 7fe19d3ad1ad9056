//! Reproducible stream-splittable random number generation.
//!
//! Every stochastic task in the crate draws from a [`SeedStream`] derived
//! from `(master seed, tag, index)`. Streams are independent ChaCha12
//! counter-based generators: the master seed and tag select a 256-bit key,
//! the index selects the ChaCha stream. Adding a new tag never perturbs the
//! draws of an existing one, and parallel tasks reduce in index order so
//! aggregates are bit-reproducible regardless of worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a, used only to fold an experiment tag into the key material.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Factory of independent, reproducible RNG streams.
#[derive(Debug, Clone, Copy)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// The generator for stream `index` of the task named `tag`.
    pub fn stream(&self, tag: &str, index: u64) -> ChaCha12Rng {
        let mut state = self.master ^ fnv1a(tag.as_bytes());
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}
