//! Packed bit strings for raw keys, oblivious keys and conclusiveness masks.

use std::fmt;

use crate::error::{Error, Result};

/// A fixed-length string of bits packed into `u64` words, least significant
/// bit first. Bits past `len` are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut out = BitString {
            len,
            words: vec![u64::MAX; words_for(len)],
        };
        out.clear_tail();
        out
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = BitString::zeros(0);
        for b in bits {
            out.push(b);
        }
        out
    }

    /// Builds a string from whole words; bits beyond `len` are discarded.
    pub fn from_words(words: Vec<u64>, len: usize) -> Self {
        assert!(words.len() >= words_for(len), "not enough words for {len} bits");
        let mut out = BitString { len, words };
        out.words.truncate(words_for(len));
        out.clear_tail();
        out
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut out = BitString::zeros(len);
        for i in indices {
            out.set(i, true);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, value: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of set bits with index in `lo..hi`.
    pub fn count_ones_in(&self, lo: usize, hi: usize) -> usize {
        let hi = hi.min(self.len);
        if lo >= hi {
            return 0;
        }
        let (lw, hw) = (lo / 64, (hi - 1) / 64);
        let mut total = 0usize;
        for w in lw..=hw {
            let mut word = self.words[w];
            if w == lw {
                word &= u64::MAX << (lo % 64);
            }
            if w == hw && !hi.is_multiple_of(64) {
                word &= (1u64 << (hi % 64)) - 1;
            }
            total += word.count_ones() as usize;
        }
        total
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Indices of set bits in increasing order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + bit)
            })
        })
    }

    pub fn xor_assign(&mut self, other: &BitString) {
        assert_eq!(self.len, other.len, "xor of bit strings with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn and_assign(&mut self, other: &BitString) {
        assert_eq!(self.len, other.len, "and of bit strings with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn or_assign(&mut self, other: &BitString) {
        assert_eq!(self.len, other.len, "or of bit strings with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn not(&self) -> BitString {
        let mut out = BitString {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.clear_tail();
        out
    }

    /// Cyclic left rotation: bit `i` of the result is bit `(i + by) mod len`.
    pub fn rotated(&self, by: usize) -> BitString {
        if self.len == 0 {
            return self.clone();
        }
        let by = by % self.len;
        BitString::from_bools((0..self.len).map(|i| self.get((i + by) % self.len)))
    }

    /// Marks every start position `i` such that the `k` bits `i..i+k` are all
    /// set. With `circular` the window wraps modulo the length; otherwise
    /// starts past `len - k` are never marked.
    pub fn window_starts(&self, k: usize, circular: bool) -> BitString {
        assert!(k >= 1, "window length must be at least 1");
        let n = self.len;
        if n == 0 {
            return BitString::zeros(0);
        }
        if circular && k > n {
            return if self.count_ones() == n {
                BitString::ones(n)
            } else {
                BitString::zeros(n)
            };
        }
        let ext = if circular && k > 1 {
            let mut ext = self.clone();
            for i in 0..k - 1 {
                ext.push(self.get(i));
            }
            ext
        } else {
            self.clone()
        };
        let mut acc = ext.words.clone();
        for shift in 1..k {
            let (wo, bo) = (shift / 64, shift % 64);
            for (w, slot) in acc.iter_mut().enumerate() {
                let lo = ext.words.get(w + wo).copied().unwrap_or(0);
                let shifted = if bo == 0 {
                    lo
                } else {
                    let hi = ext.words.get(w + wo + 1).copied().unwrap_or(0);
                    (lo >> bo) | (hi << (64 - bo))
                };
                *slot &= shifted;
            }
        }
        BitString::from_words(acc, n)
    }

    /// Number of length-`k` windows consisting only of set bits.
    pub fn count_windows(&self, k: usize, circular: bool) -> usize {
        self.window_starts(k, circular).count_ones()
    }

    /// Little-endian bit packing: bit `i` lands in byte `i / 8` at position
    /// `i % 8`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn from_le_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::decode(
                "bit string",
                format!("{} bytes cannot hold exactly {len} bits", bytes.len()),
            ));
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let out = BitString { len, words };
        let mut check = out.clone();
        check.clear_tail();
        if check != out {
            return Err(Error::decode("bit string", "non-zero padding bits"));
        }
        Ok(out)
    }

    fn clear_tail(&mut self) {
        if !self.len.is_multiple_of(64) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (self.len % 64)) - 1;
            }
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({}:", self.len)?;
        for b in self.iter().take(128) {
            f.write_str(if b { "1" } else { "0" })?;
        }
        if self.len > 128 {
            f.write_str("...")?;
        }
        f.write_str(")")
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitString::from_bools(iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_windows(bits: &[bool], k: usize, circular: bool) -> Vec<bool> {
        let n = bits.len();
        (0..n)
            .map(|i| {
                if !circular && i + k > n {
                    return false;
                }
                (0..k).all(|d| bits[(i + d) % n])
            })
            .collect()
    }

    #[test]
    fn push_get_and_count() {
        let b = BitString::from_bools([true, false, true, true]);
        assert_eq!(b.len(), 4);
        assert!(b.get(0) && !b.get(1));
        assert_eq!(b.count_ones(), 3);
        assert_eq!(b.iter_ones().collect::<Vec<_>>(), vec![0, 2, 3]);
    }

    #[test]
    fn le_bytes_layout() {
        let b = BitString::from_bools([true, false, false, false, false, false, false, false, false, true]);
        assert_eq!(b.to_le_bytes(), vec![0x01, 0x02]);
        assert!(BitString::from_le_bytes(&[0x01, 0x06], 10).is_err());
        assert!(BitString::from_le_bytes(&[0x01], 10).is_err());
    }

    #[test]
    fn count_in_range_crosses_words() {
        let b = BitString::ones(200);
        assert_eq!(b.count_ones_in(10, 150), 140);
        assert_eq!(b.count_ones_in(150, 10), 0);
        assert_eq!(b.count_ones_in(0, 500), 200);
    }

    #[test]
    fn windows_longer_than_string() {
        let all = BitString::ones(5);
        assert_eq!(all.count_windows(8, true), 5);
        assert_eq!(all.count_windows(8, false), 0);
        let mut one_gap = BitString::ones(5);
        one_gap.set(2, false);
        assert_eq!(one_gap.count_windows(8, true), 0);
    }

    proptest! {
        #[test]
        fn windows_match_naive(bits in proptest::collection::vec(any::<bool>(), 1..300), k in 1usize..70) {
            let b = BitString::from_bools(bits.iter().copied());
            for circular in [true, false] {
                let fast: Vec<bool> = b.window_starts(k, circular).iter().collect();
                prop_assert_eq!(fast, naive_windows(&bits, k, circular));
            }
        }

        #[test]
        fn le_bytes_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let b = BitString::from_bools(bits.iter().copied());
            prop_assert_eq!(BitString::from_le_bytes(&b.to_le_bytes(), b.len()).unwrap(), b);
        }
    }
}
