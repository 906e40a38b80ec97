//! Oblivious-key extraction from raw keys.
//!
//! Every key bit `OK_j` is the parity of a set of `k` raw positions:
//!
//! * original: disjoint groups `{k·j, …, k·j + k - 1}` of a `k·N` raw key;
//! * modified: circular windows `{j, …, j + k - 1} mod N` of an `N` raw key;
//! * generalized: the `j`-th k-subset of `{0, …, M - 1}` in colex order.
//!
//! Alice knows `OK_j` exactly when every position of its definition is
//! conclusive for her. All indices are 0-based.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::combinatorics::{self, binom_saturating, colex_rank, colex_unrank, ColexSubsets};
use crate::error::{Error, Result};
use crate::exchange::RawKeyTranscript;
use crate::quantum::Conclusiveness;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum SchemeKind {
    Original { k: usize },
    Modified { k: usize },
    Generalized { m: usize, k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExtractionScheme {
    kind: SchemeKind,
    key_len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyBitDefinition {
    pub key_index: usize,
    pub qubits: Vec<usize>,
}

impl ExtractionScheme {
    pub fn new(kind: SchemeKind, key_len: usize) -> Result<Self> {
        if key_len == 0 {
            return Err(Error::invalid("key length must be at least 1"));
        }
        let k = match kind {
            SchemeKind::Original { k } | SchemeKind::Modified { k } | SchemeKind::Generalized { k, .. } => k,
        };
        if k == 0 {
            return Err(Error::invalid("group size k must be at least 1"));
        }
        match kind {
            SchemeKind::Original { k } => {
                k.checked_mul(key_len)
                    .ok_or_else(|| Error::invalid("k * N overflows"))?;
            }
            SchemeKind::Modified { k } if k > key_len => {
                return Err(Error::invalid(format!(
                    "window length {k} exceeds key length {key_len}"
                )));
            }
            SchemeKind::Generalized { m, k } => {
                if k > m || binom_saturating(m as u64, k as u64) < key_len as u128 {
                    return Err(Error::CombinationSpaceTooSmall { m, k, n: key_len });
                }
            }
            SchemeKind::Modified { .. } => {}
        }
        Ok(ExtractionScheme { kind, key_len })
    }

    pub fn original(k: usize, n: usize) -> Result<Self> {
        Self::new(SchemeKind::Original { k }, n)
    }

    pub fn modified(k: usize, n: usize) -> Result<Self> {
        Self::new(SchemeKind::Modified { k }, n)
    }

    pub fn generalized(m: usize, k: usize, n: usize) -> Result<Self> {
        Self::new(SchemeKind::Generalized { m, k }, n)
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn k(&self) -> usize {
        match self.kind {
            SchemeKind::Original { k } | SchemeKind::Modified { k } | SchemeKind::Generalized { k, .. } => k,
        }
    }

    pub fn raw_len(&self) -> usize {
        match self.kind {
            SchemeKind::Original { k } => k * self.key_len,
            SchemeKind::Modified { .. } => self.key_len,
            SchemeKind::Generalized { m, .. } => m,
        }
    }

    /// Whether the key uses every k-subset of the raw key.
    fn is_full_combination_space(&self) -> bool {
        match self.kind {
            SchemeKind::Generalized { m, k } => binom_saturating(m as u64, k as u64) == self.key_len as u128,
            _ => false,
        }
    }

    pub fn tag(&self) -> u8 {
        match self.kind {
            SchemeKind::Original { .. } => 0,
            SchemeKind::Modified { .. } => 1,
            SchemeKind::Generalized { .. } => 2,
        }
    }

    pub fn check_raw_len(&self, actual: usize) -> Result<()> {
        if actual == self.raw_len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: self.raw_len(),
                actual,
            })
        }
    }

    pub fn definition(&self, j: usize) -> KeyBitDefinition {
        assert!(j < self.key_len, "key index {j} out of range");
        let n = self.key_len;
        let qubits = match self.kind {
            SchemeKind::Original { k } => (k * j..k * j + k).collect(),
            SchemeKind::Modified { k } => (j..j + k).map(|i| i % n).collect(),
            SchemeKind::Generalized { k, .. } => colex_unrank(j as u128, k),
        };
        KeyBitDefinition { key_index: j, qubits }
    }

    pub fn definitions(&self) -> Box<dyn Iterator<Item = KeyBitDefinition> + '_> {
        match self.kind {
            SchemeKind::Generalized { k, .. } => Box::new(
                ColexSubsets::new(k)
                    .take(self.key_len)
                    .enumerate()
                    .map(|(key_index, qubits)| KeyBitDefinition { key_index, qubits }),
            ),
            _ => Box::new((0..self.key_len).map(|j| self.definition(j))),
        }
    }
}

/// Bob's key: the parity of each definition over his raw bits.
pub fn xor_key(raw: &BitString, scheme: &ExtractionScheme) -> Result<BitString> {
    scheme.check_raw_len(raw.len())?;
    let n = scheme.key_len();
    let key = match scheme.kind() {
        SchemeKind::Original { k } => (0..n).map(|j| raw.count_ones_in(k * j, k * j + k) % 2 == 1).collect(),
        SchemeKind::Modified { k } => {
            // prefix parities over the raw key followed by its first k-1 bits
            let mut prefix = Vec::with_capacity(n + k);
            let mut acc = false;
            prefix.push(acc);
            for i in 0..n + k - 1 {
                acc ^= raw.get(i % n);
                prefix.push(acc);
            }
            (0..n).map(|j| prefix[j + k] ^ prefix[j]).collect()
        }
        SchemeKind::Generalized { .. } => scheme
            .definitions()
            .map(|d| d.qubits.iter().fold(false, |p, &q| p ^ raw.get(q)))
            .collect(),
    };
    Ok(key)
}

/// Key indices whose definition lies entirely inside `mask`, ascending.
pub fn covered_key_indices(mask: &BitString, scheme: &ExtractionScheme) -> Result<Vec<usize>> {
    scheme.check_raw_len(mask.len())?;
    let n = scheme.key_len();
    let out = match scheme.kind() {
        SchemeKind::Original { k } => (0..n).filter(|&j| mask.count_ones_in(k * j, k * j + k) == k).collect(),
        SchemeKind::Modified { k } => mask.window_starts(k, true).iter_ones().collect(),
        SchemeKind::Generalized { k, .. } => {
            let items: Vec<usize> = mask.iter_ones().collect();
            let mut ranks = Vec::new();
            combinatorics::for_each_k_subset(&items, k, |s| {
                let r = colex_rank(s);
                if r < n as u128 {
                    ranks.push(r as usize);
                }
            });
            ranks.sort_unstable();
            ranks
        }
    };
    Ok(out)
}

/// `|alice_known|` for the given conclusive mask, without computing values.
pub fn count_known(conclusive: &BitString, scheme: &ExtractionScheme) -> Result<u128> {
    scheme.check_raw_len(conclusive.len())?;
    Ok(match scheme.kind() {
        SchemeKind::Generalized { k, .. } => {
            let items: Vec<usize> = conclusive.iter_ones().collect();
            if scheme.is_full_combination_space() {
                binom_saturating(items.len() as u64, k as u64)
            } else {
                combinatorics::count_subsets_below_rank(&items, k, scheme.key_len() as u128)
            }
        }
        _ => covered_key_indices(conclusive, scheme)?.len() as u128,
    })
}

/// Alice's known key bits from her per-position verdicts.
pub fn alice_known(verdicts: &[Conclusiveness], scheme: &ExtractionScheme) -> Result<BTreeMap<usize, bool>> {
    let mask: BitString = verdicts.iter().map(|v| v.is_conclusive()).collect();
    let known = covered_key_indices(&mask, scheme)?;
    Ok(known
        .into_iter()
        .map(|j| {
            let value = scheme.definition(j).qubits.iter().fold(false, |p, &q| {
                p ^ verdicts[q].conclusive_bit().expect("covered position is conclusive")
            });
            (j, value)
        })
        .collect())
}

/// Bob's full key paired with Alice's partial view of it.
#[derive(Clone, Debug, PartialEq)]
pub struct ObliviousKeyView {
    pub scheme: ExtractionScheme,
    pub bob_key: BitString,
    /// Key bits that depend on a raw position where Bob had no bit value.
    /// Those bits are stored as 0 in `bob_key`.
    pub unreliable: Option<BitString>,
    pub alice_known: BTreeMap<usize, bool>,
    pub alice_guesses: Option<BTreeMap<usize, (bool, f64)>>,
}

pub fn extract(t: &RawKeyTranscript, scheme: &ExtractionScheme) -> Result<ObliviousKeyView> {
    scheme.check_raw_len(t.len())?;
    let raw: BitString = t.records().iter().map(|r| r.bob_bit.unwrap_or(false)).collect();
    let defined: BitString = t.records().iter().map(|r| r.bob_bit.is_some()).collect();
    let bob_key = xor_key(&raw, scheme)?;
    let unreliable = if defined.count_ones() == defined.len() {
        None
    } else {
        let reliable = BitString::from_indices(scheme.key_len(), covered_key_indices(&defined, scheme)?);
        Some(reliable.not())
    };
    let bob_key = match &unreliable {
        Some(u) => {
            let mut masked = bob_key;
            masked.and_assign(&u.not());
            masked
        }
        None => bob_key,
    };
    Ok(ObliviousKeyView {
        scheme: *scheme,
        bob_key,
        unreliable,
        alice_known: alice_known(&t.verdicts(), scheme)?,
        alice_guesses: None,
    })
}

impl ObliviousKeyView {
    pub fn len(&self) -> usize {
        self.bob_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob_key.is_empty()
    }

    pub fn known_indices(&self) -> Vec<usize> {
        self.alice_known.keys().copied().collect()
    }

    /// Known positions where Alice's value disagrees with a reliable Bob bit.
    pub fn disagreements(&self) -> Vec<usize> {
        self.alice_known
            .iter()
            .filter(|(&j, &v)| {
                let reliable = self.unreliable.as_ref().is_none_or(|u| !u.get(j));
                reliable && self.bob_key.get(j) != v
            })
            .map(|(&j, _)| j)
            .collect()
    }

    /// Compact binary encoding:
    ///
    /// ```text
    /// "QOKV" | version u8 = 1 | scheme tag u8 | N u64 | k u32 | M u64 | flags u8
    /// | bob key (ceil(N/8) bytes, little-endian bits)
    /// | [unreliable mask, same layout]                    if flags & 1
    /// | known count u64 | (index u64, bit u8)*            ascending index
    /// | [guess count u64 | (index u64, bit u8, conf f64)*] if flags & 2
    /// ```
    ///
    /// All integers little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.len() / 8 + 9 * self.alice_known.len());
        out.extend_from_slice(KEY_MAGIC);
        out.push(KEY_FORMAT_VERSION);
        out.push(self.scheme.tag());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.scheme.k() as u32).to_le_bytes());
        let m = match self.scheme.kind() {
            SchemeKind::Generalized { m, .. } => m as u64,
            _ => 0,
        };
        out.extend_from_slice(&m.to_le_bytes());
        let flags = u8::from(self.unreliable.is_some()) | (u8::from(self.alice_guesses.is_some()) << 1);
        out.push(flags);
        out.extend_from_slice(&self.bob_key.to_le_bytes());
        if let Some(u) = &self.unreliable {
            out.extend_from_slice(&u.to_le_bytes());
        }
        out.extend_from_slice(&(self.alice_known.len() as u64).to_le_bytes());
        for (&j, &v) in &self.alice_known {
            out.extend_from_slice(&(j as u64).to_le_bytes());
            out.push(u8::from(v));
        }
        if let Some(guesses) = &self.alice_guesses {
            out.extend_from_slice(&(guesses.len() as u64).to_le_bytes());
            for (&j, &(v, c)) in guesses {
                out.extend_from_slice(&(j as u64).to_le_bytes());
                out.push(u8::from(v));
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != KEY_MAGIC {
            return Err(Error::decode("key view", "bad magic"));
        }
        let version = r.u8()?;
        if version != KEY_FORMAT_VERSION {
            return Err(Error::decode("key view", format!("unsupported version {version}")));
        }
        let tag = r.u8()?;
        let n = r.usize()?;
        let k = r.u32()? as usize;
        let m = r.usize()?;
        let kind = match tag {
            0 => SchemeKind::Original { k },
            1 => SchemeKind::Modified { k },
            2 => SchemeKind::Generalized { m, k },
            other => return Err(Error::decode("key view", format!("unknown scheme tag {other}"))),
        };
        let scheme = ExtractionScheme::new(kind, n)?;
        let flags = r.u8()?;
        if flags & !3 != 0 {
            return Err(Error::decode("key view", format!("unknown flags {flags:#x}")));
        }
        let bob_key = BitString::from_le_bytes(r.take(n.div_ceil(8))?, n)?;
        let unreliable = if flags & 1 == 1 {
            Some(BitString::from_le_bytes(r.take(n.div_ceil(8))?, n)?)
        } else {
            None
        };
        let mut alice_known = BTreeMap::new();
        let mut last = None;
        for _ in 0..r.usize()? {
            let j = r.index(n, &mut last)?;
            alice_known.insert(j, r.bit()?);
        }
        let alice_guesses = if flags & 2 == 2 {
            let mut guesses = BTreeMap::new();
            let mut last = None;
            for _ in 0..r.usize()? {
                let j = r.index(n, &mut last)?;
                let v = r.bit()?;
                let c = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                guesses.insert(j, (v, c));
            }
            Some(guesses)
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::decode("key view", "trailing bytes"));
        }
        Ok(ObliviousKeyView {
            scheme,
            bob_key,
            unreliable,
            alice_known,
            alice_guesses,
        })
    }
}

const KEY_MAGIC: &[u8; 4] = b"QOKV";
const KEY_FORMAT_VERSION: u8 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::decode("key view", "truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::decode("key view", "value exceeds usize"))
    }

    fn bit(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::decode("key view", format!("bit byte {b}"))),
        }
    }

    fn index(&mut self, n: usize, last: &mut Option<usize>) -> Result<usize> {
        let j = self.usize()?;
        if j >= n || last.is_some_and(|l| j <= l) {
            return Err(Error::decode("key view", "indices must be ascending and below N"));
        }
        *last = Some(j);
        Ok(j)
    }
}

/// Adjacent pairs `(OK_j, OK_{j+1})` of a modified-scheme key whose parity
/// `q_j ⊕ q_{j+k}` Alice can compute. Returns the `j`s, ascending.
pub fn knowable_adjacent_parities(conclusive: &BitString, scheme: &ExtractionScheme) -> Result<Vec<usize>> {
    let SchemeKind::Modified { k } = scheme.kind() else {
        return Err(Error::invalid("adjacent parities are defined for the modified scheme"));
    };
    scheme.check_raw_len(conclusive.len())?;
    let n = scheme.key_len();
    Ok(conclusive
        .iter_ones()
        .filter(|&j| conclusive.get((j + k) % n))
        .collect())
}

/// Brute-force count of key-bit pairs `(i, j)`, `i < j`, whose parity
/// `OK_i ⊕ OK_j` is computable: the symmetric difference of their
/// definitions is fully conclusive. Quadratic in the key length.
pub fn knowable_parity_pairs(conclusive: &BitString, scheme: &ExtractionScheme) -> Result<usize> {
    const LIMIT: usize = 4096;
    scheme.check_raw_len(conclusive.len())?;
    if scheme.key_len() > LIMIT {
        return Err(Error::invalid(format!(
            "parity-pair brute force limited to {LIMIT} key bits"
        )));
    }
    let defs: Vec<BitString> = scheme
        .definitions()
        .map(|d| BitString::from_indices(scheme.raw_len(), d.qubits))
        .collect();
    let inconclusive = conclusive.not();
    let mut count = 0;
    for i in 0..defs.len() {
        for j in i + 1..defs.len() {
            let mut diff = defs[i].clone();
            diff.xor_assign(&defs[j]);
            diff.and_assign(&inconclusive);
            count += usize::from(diff.count_ones() == 0);
        }
    }
    Ok(count)
}

/// `{ j ∈ a : (j + shift) mod n ∈ b }` for sorted `a` and `b`.
pub fn shifted_intersection(a: &[usize], b: &[usize], shift: usize, n: usize) -> Vec<usize> {
    a.iter()
        .copied()
        .filter(|&j| b.binary_search(&((j + shift) % n)).is_ok())
        .collect()
}

/// Shift `s` maximizing `|{ j ∈ a : (j + s) mod n ∈ b }|`, smallest on ties.
///
/// Every pair `(x, y) ∈ a × b` votes for the offset `(y - x) mod n`; the
/// histogram of pairwise differences gives all `n` overlap counts at once.
pub fn optimal_shift(known_a: &[usize], known_b: &[usize], n: usize) -> (usize, usize) {
    assert!(n >= 1, "key length must be at least 1");
    let mut votes = vec![0u32; n];
    for &x in known_a {
        for &y in known_b {
            votes[(y + n - x % n) % n] += 1;
        }
    }
    let (mut best, mut best_count) = (0usize, 0u32);
    for (s, &c) in votes.iter().enumerate() {
        if c > best_count {
            best = s;
            best_count = c;
        }
    }
    (best, best_count as usize)
}

/// Greedy shift choice for `r` keys: the first key is unshifted and each
/// further key is aligned optimally against the running combination.
/// Returns the shifts and the surviving known indices.
pub fn greedy_shifts(known: &[Vec<usize>], n: usize) -> (Vec<usize>, Vec<usize>) {
    let Some(first) = known.first() else {
        return (Vec::new(), Vec::new());
    };
    let mut shifts = vec![0];
    let mut combined = first.clone();
    for next in &known[1..] {
        let (s, _) = optimal_shift(&combined, next, n);
        combined = shifted_intersection(&combined, next, s, n);
        shifts.push(s);
    }
    (shifts, combined)
}

/// XOR-combines keys with cyclic shifts: `fin[j] = ⊕_m keys[m][(j + s_m) mod N]`.
pub fn dilute(keys: &[ObliviousKeyView], shifts: &[usize]) -> Result<ObliviousKeyView> {
    let first = keys
        .first()
        .ok_or_else(|| Error::invalid("dilution needs at least one key"))?;
    if shifts.len() != keys.len() {
        return Err(Error::LengthMismatch {
            expected: keys.len(),
            actual: shifts.len(),
        });
    }
    let n = first.len();
    if let Some(bad) = keys.iter().find(|k| k.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    let mut bob_key = BitString::zeros(n);
    let mut unreliable: Option<BitString> = None;
    for (key, &s) in keys.iter().zip(shifts) {
        bob_key.xor_assign(&key.bob_key.rotated(s));
        if let Some(u) = &key.unreliable {
            unreliable
                .get_or_insert_with(|| BitString::zeros(n))
                .or_assign(&u.rotated(s));
        }
    }
    let mut alice_known = BTreeMap::new();
    'outer: for &j in first.alice_known.keys() {
        let mut value = false;
        for (key, &s) in keys.iter().zip(shifts) {
            match key.alice_known.get(&((j + n - shifts[0] % n + s) % n)) {
                Some(&v) => value ^= v,
                None => continue 'outer,
            }
        }
        alice_known.insert((j + n - shifts[0] % n) % n, value);
    }
    Ok(ObliviousKeyView {
        scheme: first.scheme,
        bob_key,
        unreliable,
        alice_known,
        alice_guesses: None,
    })
}
