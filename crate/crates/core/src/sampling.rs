//! Counter-based random streams and with-replacement batch draws.
//!
//! Every random draw in the library comes from a ChaCha8 stream keyed by
//! `(seed, channel, epoch, inner)`. Draws therefore do not depend on the order
//! in which other streams are consumed, nor on the number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Purpose of a stream; distinct channels never share random words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    AnchorValues,
    AnchorJacobians,
    InnerValues,
    InnerJacobians,
    Solver,
    Epochs,
    Generator,
    Validation,
    Auxiliary(u32),
}

impl Channel {
    fn tag(self) -> u64 {
        match self {
            Channel::AnchorValues => 1,
            Channel::AnchorJacobians => 2,
            Channel::InnerValues => 3,
            Channel::InnerJacobians => 4,
            Channel::Solver => 5,
            Channel::Epochs => 6,
            Channel::Generator => 7,
            Channel::Validation => 8,
            Channel::Auxiliary(k) => 0x100 + k as u64,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed family of independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Derived family, e.g. one per Monte-Carlo replay.
    pub fn fork(&self, salt: u64) -> Self {
        let mut s = self.seed ^ salt.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        Self {
            seed: splitmix64(&mut s),
        }
    }

    /// The stream for `(channel, epoch, inner)`.
    pub fn rng(&self, channel: Channel, epoch: u64, inner: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ channel.tag().wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((epoch << 32) ^ (inner & 0xFFFF_FFFF));
        rng
    }
}

/// How batches are drawn from a finite population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SamplingMode {
    /// i.i.d. uniform draws with replacement.
    #[default]
    WithReplacement,
    /// Each index exactly `size / population` times (test-only; size must be a multiple).
    FullCoverage,
}

/// A batch of population indices stored as distinct indices with multiplicities.
///
/// Duplicated draws evaluate the same deterministic oracle, so the batch mean
/// only depends on the multiplicities. `size` is the nominal number of draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub size: u64,
    pub entries: Vec<(usize, u64)>,
}

impl Batch {
    /// Weight `count / size` of every distinct index.
    pub fn weights(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let size = self.size as f64;
        self.entries.iter().map(move |&(j, c)| (j, c as f64 / size))
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }
}

/// Draw `size` indices uniformly with replacement from `0..population`.
///
/// Small batches are drawn index by index; batches larger than the population
/// are drawn as one multinomial vector (sequential binomials), which has the
/// same distribution for the multiplicities.
pub fn draw_batch<R: Rng + ?Sized>(
    population: usize,
    size: u64,
    mode: SamplingMode,
    rng: &mut R,
) -> Batch {
    assert!(population > 0, "empty population");
    assert!(size > 0, "empty batch");
    match mode {
        SamplingMode::FullCoverage => {
            assert!(
                size.is_multiple_of(population as u64),
                "full coverage needs a batch that is a multiple of the population"
            );
            let reps = size / population as u64;
            Batch {
                size,
                entries: (0..population).map(|j| (j, reps)).collect(),
            }
        }
        SamplingMode::WithReplacement if (size as u128) <= population as u128 => {
            let mut idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..population)).collect();
            idx.sort_unstable();
            let mut entries: Vec<(usize, u64)> = Vec::with_capacity(idx.len());
            for j in idx {
                match entries.last_mut() {
                    Some((last, c)) if *last == j => *c += 1,
                    _ => entries.push((j, 1)),
                }
            }
            Batch { size, entries }
        }
        SamplingMode::WithReplacement => {
            let mut remaining = size;
            let mut entries = Vec::new();
            for j in 0..population {
                if remaining == 0 {
                    break;
                }
                let left = (population - j) as f64;
                let c = if j + 1 == population {
                    remaining
                } else {
                    Binomial::new(remaining, 1.0 / left)
                        .expect("valid binomial parameters")
                        .sample(rng)
                };
                if c > 0 {
                    entries.push((j, c));
                    remaining -= c;
                }
            }
            Batch { size, entries }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(7);
        let a: u64 = s.rng(Channel::InnerValues, 3, 4).random();
        let b: u64 = s.rng(Channel::InnerValues, 3, 4).random();
        let c: u64 = s.rng(Channel::InnerValues, 3, 5).random();
        let d: u64 = s.rng(Channel::InnerJacobians, 3, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(s.fork(1).seed, s.fork(2).seed);
    }

    #[test]
    fn small_batch_counts_sum_to_size() {
        let mut rng = RngStream::new(1).rng(Channel::Auxiliary(0), 0, 0);
        let b = draw_batch(50, 20, SamplingMode::WithReplacement, &mut rng);
        assert_eq!(b.entries.iter().map(|e| e.1).sum::<u64>(), 20);
        assert!(b.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn large_batch_is_multinomial() {
        let mut rng = RngStream::new(2).rng(Channel::Auxiliary(0), 0, 0);
        let size = 1_000_000_000_000u64;
        let b = draw_batch(10, size, SamplingMode::WithReplacement, &mut rng);
        assert_eq!(b.entries.iter().map(|e| e.1).sum::<u64>(), size);
        for (_, w) in b.weights() {
            assert!((w - 0.1).abs() < 1e-4);
        }
    }

    #[test]
    fn full_coverage_hits_every_index() {
        let mut rng = RngStream::new(3).rng(Channel::Auxiliary(0), 0, 0);
        let b = draw_batch(4, 8, SamplingMode::FullCoverage, &mut rng);
        assert_eq!(b.entries, vec![(0, 2), (1, 2), (2, 2), (3, 2)]);
    }

    #[test]
    fn draw_frequencies_are_uniform() {
        // chi-square style sanity check on 10 cells
        let mut rng = RngStream::new(4).rng(Channel::Auxiliary(0), 0, 0);
        let mut counts = [0u64; 10];
        for _ in 0..2000 {
            for (j, c) in draw_batch(10, 5, SamplingMode::WithReplacement, &mut rng).entries {
                counts[j] += c;
            }
        }
        let expected = 1000.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 30.0, "chi2 = {chi2}");
    }
}
