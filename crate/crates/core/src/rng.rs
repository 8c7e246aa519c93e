//! Counter-based substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose key is
//! a hash of `(seed, domain, index...)`. A replicate's draws depend only on its
//! own key, never on which thread ran it or in what order, so Monte Carlo
//! tables and simulated datasets are reproducible across worker counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating independent uses of the same user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    NullPermutation = 1,
    Dataset = 2,
    Contamination = 3,
    TieBreak = 4,
    Oracle = 5,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed hash of a seed and a counter path.
pub fn mix(seed: u64, domain: Domain, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x6A09_E667_F3BC_C908);
    h = splitmix64(h ^ domain as u64);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// Independent generator for `(seed, domain, path)`.
pub fn substream(seed: u64, domain: Domain, path: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = mix(seed, domain, path);
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&h.to_le_bytes());
        h = splitmix64(h);
    }
    ChaCha8Rng::from_seed(key)
}

/// Fisher-Yates shuffle of `1..=n`, returned as a rank vector.
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u32> {
    let mut perm: Vec<u32> = (1..=n as u32).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}
