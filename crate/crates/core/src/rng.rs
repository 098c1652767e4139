//! Seeded randomness.
//!
//! Every stochastic step draws from a `xoshiro256++` generator whose 256-bit
//! state is expanded from a 64-bit seed with splitmix64 (the
//! `SeedableRng::seed_from_u64` contract of `rand_xoshiro`).
//!
//! Seeds for sub-tasks are never taken from a shared generator. Instead each
//! consumer derives its own seed from its parent seed and a textual label:
//!
//! ```text
//! derive_seed(parent, label) = splitmix64(parent ^ splitmix64(fnv1a64(label)))
//! ```
//!
//! so the stream a stage sees depends only on the root seed and the stage's
//! label path (e.g. `"matrix/population"`, `"evaluate/search/KNN"`), never on
//! scheduling or on how many numbers other stages consumed.

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn derive_seed(parent: u64, label: &str) -> u64 {
    splitmix64(parent ^ splitmix64(fnv1a64(label.as_bytes())))
}

pub fn derive_indexed(parent: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(parent, label) ^ splitmix64(index))
}

/// Fisher-Yates with 64-bit bounded draws, so the permutation does not
/// depend on the platform's pointer width.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

/// `count` distinct indices from `0..n`, in draw order.
pub fn sample_without_replacement(rng: &mut Rng, n: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let count = count.min(n);
    for i in 0..count {
        let j = i + rng.gen_range(0..(n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

pub fn uniform_index(rng: &mut Rng, n: usize) -> usize {
    rng.gen_range(0..n as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derived_seeds_differ_by_label_and_index() {
        let a = derive_seed(7, "matrix");
        let b = derive_seed(7, "evaluate");
        assert_ne!(a, b);
        assert_ne!(derive_indexed(7, "x", 0), derive_indexed(7, "x", 1));
        assert_eq!(derive_seed(7, "matrix"), a);
    }

    #[test]
    fn generator_is_reproducible() {
        let mut r1 = rng_from_seed(42);
        let mut r2 = rng_from_seed(42);
        for _ in 0..100 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = rng_from_seed(3);
        let mut v: Vec<usize> = (0..50).collect();
        shuffle(&mut rng, &mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn sampling_without_replacement_is_distinct() {
        let mut rng = rng_from_seed(9);
        let mut s = sample_without_replacement(&mut rng, 20, 10);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|&i| i < 20));
    }
}
