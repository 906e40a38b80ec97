//! Seeded random streams.
//!
//! Every experiment is driven by a master seed; run `i` draws from the
//! ChaCha stream `i` under that seed, so runs are independent of the order
//! in which workers execute them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::BitString;

pub type Stream = ChaCha8Rng;

pub fn stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// A 64-bit seed for sub-component `index` of the run seeded by `master_seed`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    stream(master_seed, index).next_u64()
}

/// `len` independent Bernoulli(`p`) bits.
///
/// Each lane compares a uniform 64-bit fraction against `p` most significant
/// bit first, 64 lanes per word, stopping once every lane is decided. `p` is
/// quantized to a multiple of 2^-64.
pub fn bernoulli_bits<R: RngCore>(rng: &mut R, p: f64, len: usize) -> BitString {
    assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
    if p >= 1.0 {
        return BitString::ones(len);
    }
    let threshold = (p * 2f64.powi(64)) as u64;
    let mut words = Vec::with_capacity(len.div_ceil(64));
    for _ in 0..len.div_ceil(64) {
        let mut below = 0u64;
        let mut undecided = u64::MAX;
        for digit in (0..64).rev() {
            // Undecided lanes can only end up below p while p has set bits left.
            if undecided == 0 || threshold & ((1u64 << digit) | ((1u64 << digit) - 1)) == 0 {
                break;
            }
            let r = rng.next_u64();
            if (threshold >> digit) & 1 == 1 {
                below |= undecided & !r;
                undecided &= r;
            } else {
                undecided &= !r;
            }
        }
        words.push(below);
    }
    BitString::from_words(words, len)
}
