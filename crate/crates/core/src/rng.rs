//! Counter-based Gaussian streams.
//!
//! A stream is addressed by a 64-bit key. Its `i`-th variate depends only on
//! `(key, i)`: variates are produced in fixed chunks, each chunk drawn from a
//! ChaCha8 generator seeded by hashing the key with the chunk index. Any
//! window of a stream can therefore be regenerated, extended or produced out
//! of order without touching the others, and replica results never depend
//! on how work was scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const CHUNK: i64 = 1024;

/// The SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a list of words.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// FNV-1a, used to turn labels into stream tags.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of replica `replica` of experiment `label`. Adding replicas never
/// changes the seeds of existing ones.
pub fn replica_seed(master: u64, label: &str, replica: u64) -> u64 {
    mix(&[master, label_hash(label), replica])
}

/// A general purpose generator for one-off sampling.
pub fn generator(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed))
}

/// An addressable stream of standard normal variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    key: u64,
}

impl NormalStream {
    pub fn new(seed: u64, tag: &str, index: u64) -> Self {
        Self {
            key: mix(&[seed, label_hash(tag), index]),
        }
    }

    /// Fills `out` with the variates at positions `start, start + 1, ...`.
    /// Positions may be negative.
    pub fn fill(&self, start: i64, out: &mut [f64]) {
        let mut pos = start;
        let end = start + out.len() as i64;
        let mut buf = vec![0.0; CHUNK as usize];
        while pos < end {
            let chunk = pos.div_euclid(CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.key, chunk as u64]));
            let stop = ((chunk + 1) * CHUNK).min(end);
            let upto = (stop - chunk * CHUNK) as usize;
            for slot in buf.iter_mut().take(upto) {
                *slot = StandardNormal.sample(&mut rng);
            }
            let from = (pos - chunk * CHUNK) as usize;
            let dst = (pos - start) as usize;
            out[dst..dst + upto - from].copy_from_slice(&buf[from..upto]);
            pos = stop;
        }
    }

    pub fn take(&self, start: i64, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        self.fill(start, &mut v);
        v
    }
}
