//! Exact binomial coefficients and colexicographic k-subset enumeration.
//!
//! Colex order ranks a sorted subset `c_0 < c_1 < … < c_{k-1}` as
//! `Σ binom(c_i, i + 1)`; the first `binom(m, k)` ranks are exactly the
//! subsets of `{0, …, m-1}`.

/// Exact `binom(n, k)`, or `None` if an intermediate value leaves `u128`.
pub fn binom(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc == binom(n, i); acc * (n - i) is divisible by i + 1, and after
        // cancelling gcd(acc, i + 1) the rest of i + 1 divides n - i.
        let d = i as u128 + 1;
        let g = gcd(acc, d);
        acc = (acc / g).checked_mul((n - i) as u128 / (d / g))?;
    }
    Some(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `binom(n, k)` saturated at `u128::MAX`; any saturated value exceeds every
/// `u64`.
pub fn binom_saturating(n: u64, k: u64) -> u128 {
    binom(n, k).unwrap_or(u128::MAX)
}

pub fn binom_f64(n: u64, k: u64) -> f64 {
    match binom(n, k) {
        Some(v) => v as f64,
        None => (ln_binom(n, k)).exp(),
    }
}

fn ln_binom(n: u64, k: u64) -> f64 {
    (0..k.min(n - k))
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Smallest `m` with `binom(m, k) >= n`.
pub fn min_m(n: u64, k: u64) -> u64 {
    assert!(n >= 1 && k >= 1, "min_m needs n >= 1 and k >= 1");
    let enough = |m: u64| binom_saturating(m, k) >= n as u128;
    let mut hi = k;
    while !enough(hi) {
        hi = hi.saturating_mul(2);
    }
    let mut lo = k;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if enough(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Colex rank of a strictly increasing subset.
pub fn colex_rank(subset: &[usize]) -> u128 {
    debug_assert!(subset.windows(2).all(|w| w[0] < w[1]));
    subset
        .iter()
        .enumerate()
        .map(|(i, &c)| binom_saturating(c as u64, i as u64 + 1))
        .fold(0u128, u128::saturating_add)
}

/// The `rank`-th k-subset in colex order.
pub fn colex_unrank(mut rank: u128, k: usize) -> Vec<usize> {
    let mut out = vec![0usize; k];
    for i in (1..=k).rev() {
        // largest c with binom(c, i) <= rank
        let mut c = i - 1;
        while binom_saturating(c as u64 + 1, i as u64) <= rank {
            c += 1;
        }
        rank -= binom_saturating(c as u64, i as u64);
        out[i - 1] = c;
    }
    out
}

/// Unbounded iterator over k-subsets of the naturals in colex order.
#[derive(Clone, Debug)]
pub struct ColexSubsets {
    current: Vec<usize>,
    started: bool,
}

impl ColexSubsets {
    pub fn new(k: usize) -> Self {
        ColexSubsets {
            current: (0..k).collect(),
            started: false,
        }
    }
}

impl Iterator for ColexSubsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if !self.started {
            self.started = true;
            return Some(self.current.clone());
        }
        let k = self.current.len();
        if k == 0 {
            return None;
        }
        let i = (0..k)
            .find(|&i| i + 1 == k || self.current[i] + 1 < self.current[i + 1])
            .expect("last position always qualifies");
        self.current[i] += 1;
        for (j, slot) in self.current[..i].iter_mut().enumerate() {
            *slot = j;
        }
        Some(self.current.clone())
    }
}

/// Calls `f` on every k-subset of `items` (in lexicographic order of
/// positions), passing the chosen items.
pub fn for_each_k_subset<F: FnMut(&[usize])>(items: &[usize], k: usize, mut f: F) {
    if k > items.len() {
        return;
    }
    if k == 0 {
        f(&[]);
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut chosen: Vec<usize> = idx.iter().map(|&i| items[i]).collect();
    loop {
        f(&chosen);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < items.len() - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        for j in i..k {
            chosen[j] = items[idx[j]];
        }
    }
}

/// Number of k-subsets of the sorted set `items` whose colex rank is below
/// `bound`.
///
/// Subsets with largest element `s` occupy the contiguous rank range
/// `[binom(s, k), binom(s + 1, k))`, so at most one largest element per
/// level straddles `bound` and needs recursion.
pub fn count_subsets_below_rank(items: &[usize], k: usize, bound: u128) -> u128 {
    if k == 0 {
        return u128::from(bound > 0);
    }
    let mut total: u128 = 0;
    for (pos, &s) in items.iter().enumerate() {
        if pos < k - 1 {
            continue;
        }
        let start = binom_saturating(s as u64, k as u64);
        if start >= bound {
            break;
        }
        let below = &items[..pos];
        let remaining = bound - start;
        let span = binom_saturating(s as u64, k as u64 - 1);
        total = total.saturating_add(if remaining >= span {
            binom_saturating(below.len() as u64, k as u64 - 1)
        } else {
            count_subsets_below_rank(below, k - 1, remaining)
        });
    }
    total
}
