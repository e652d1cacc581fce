//! Seeded pseudo-random interleaver that spreads burst erasures.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `perm[i]` is the source position of output position `i`.
pub fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

pub fn interleave<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    permutation(items.len(), seed)
        .into_iter()
        .map(|p| items[p].clone())
        .collect()
}

pub fn deinterleave<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let perm = permutation(items.len(), seed);
    let mut out = items.to_vec();
    for (i, p) in perm.into_iter().enumerate() {
        out[p] = items[i].clone();
    }
    out
}
