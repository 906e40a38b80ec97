//! Closed-form oracles and statistics: streak expectations, Markov bounds,
//! parameter choice, abort and guess probabilities, generalized-scheme
//! binomial statistics and the conclusiveness-bias attack.

use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{binom, binom_f64};
use crate::error::{Error, Result};
use crate::exchange::{RawKeyTranscript, P_MINUS, P_PLUS};
use crate::rng::{bernoulli_bits, stream};

/// Honest conclusive probability.
pub const P_HONEST: f64 = 0.25;

/// `E[X_l] = N·p^l`: expected number of length-`l` all-conclusive windows.
pub fn expected_streaks(n: f64, p: f64, l: f64) -> f64 {
    n * p.powf(l)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StreakStats {
    pub n: u64,
    pub p: f64,
    pub l: u32,
    pub expected_count: f64,
    /// `1 - exp(-E·(1-p))`: windows clump into runs, and the number of runs
    /// of length at least `l` is close to Poisson with mean `E·(1-p)`.
    pub at_least_one_estimate: f64,
}

pub fn streak_stats(n: u64, p: f64, l: u32) -> StreakStats {
    let expected_count = expected_streaks(n as f64, p, l as f64);
    StreakStats {
        n,
        p,
        l,
        expected_count,
        at_least_one_estimate: 1.0 - (-expected_count * (1.0 - p)).exp(),
    }
}

/// Markov bound on `P(X >= t)` for a non-negative count with mean `expected`.
pub fn markov_streak_bound(expected: f64, t: f64) -> f64 {
    assert!(expected >= 0.0 && t > 0.0, "markov bound needs E >= 0 and t > 0");
    (expected / t).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KChoice {
    /// `log4(N / c)`.
    pub exact: f64,
    /// Nearest integer to `exact` (at least 1).
    pub recommended: u32,
}

/// Group size that leaves Alice about `c` known key bits out of `N`.
pub fn k_for_target(n: f64, c: f64) -> Result<KChoice> {
    if !(c > 0.0 && n > c) {
        return Err(Error::invalid(format!(
            "k_for_target needs N > c > 0, got N={n}, c={c}"
        )));
    }
    let exact = (n / c).ln() / 4f64.ln();
    Ok(KChoice {
        exact,
        recommended: (exact.round() as u32).max(1),
    })
}

/// Probability that the original scheme leaves Alice with no known key bit.
pub fn abort_prob_original(c: f64) -> f64 {
    (-c).exp()
}

/// Probability of guessing a group's parity correctly when `x` of its bits
/// are inconclusive: `(3^x + 1) / (2·3^x)`.
pub fn guess_prob_group(x: u32) -> Result<f64> {
    if x == 0 {
        return Err(Error::invalid("x = 0 means the group is fully known"));
    }
    Ok(0.5 * (1.0 + 3f64.powi(-(x as i32))))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneralizedStats {
    pub m: u64,
    pub k: u64,
    pub p: f64,
    /// `P(Binomial(M, p) < k)`: no k-subset is fully conclusive.
    pub nobit: f64,
    /// Mean survivor count given at least one survivor.
    pub conditional_average: f64,
    /// Unconditional mean survivor count `binom(M, k)·p^k`.
    pub expected_survivors: f64,
}

impl GeneralizedStats {
    pub const CSV_HEADER: &'static str = "M,k,p,nobit,nobit_pct,cond_avg,expected";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.m,
            self.k,
            self.p,
            self.nobit,
            100.0 * self.nobit,
            self.conditional_average,
            self.expected_survivors
        )
    }
}

/// `P(Binomial(m, p) < k)`, summed term by term from exact binomial
/// coefficients.
pub fn binomial_cdf_below(m: u64, p: f64, k: u64) -> f64 {
    (0..k.min(m + 1))
        .map(|x| binom_f64(m, x) * p.powi(x as i32) * (1.0 - p).powi((m - x) as i32))
        .sum()
}

pub fn generalized_stats(m: u64, k: u64, p: f64) -> Result<GeneralizedStats> {
    if !(1 <= k && k <= m) {
        return Err(Error::invalid(format!("need 1 <= k <= M, got k={k}, M={m}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("need 0 < p <= 1, got {p}")));
    }
    let nobit = if p == 1.0 { 0.0 } else { binomial_cdf_below(m, p, k) };
    let combos = binom(m, k).map_or_else(|| binom_f64(m, k), |v| v as f64);
    let expected_survivors = combos * p.powi(k as i32);
    Ok(GeneralizedStats {
        m,
        k,
        p,
        nobit,
        conditional_average: expected_survivors / (1.0 - nobit),
        expected_survivors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasStats {
    pub n: u64,
    pub k: u32,
    pub p_plus: f64,
    pub p_minus: f64,
    /// Expected length-k windows in the raised segment, `p₋·N·p₊^k`.
    pub e_plus: f64,
    /// Expected length-k windows in the lowered segment, `p₊·N·p₋^k`.
    pub e_minus: f64,
    /// `E₊/E₋ = (p₊/p₋)^(k-1)`.
    pub ratio: f64,
    /// Probability that Alice's chosen key bit lies in the raised segment.
    pub localization: f64,
}

pub fn bias_attack_stats(n: u64, k: u32) -> BiasStats {
    let nf = n as f64;
    let e_plus = P_MINUS * nf * P_PLUS.powi(k as i32);
    let e_minus = P_PLUS * nf * P_MINUS.powi(k as i32);
    BiasStats {
        n,
        k,
        p_plus: P_PLUS,
        p_minus: P_MINUS,
        e_plus,
        e_minus,
        ratio: (P_PLUS / P_MINUS).powi(k as i32 - 1),
        localization: e_plus / (e_plus + e_minus),
    }
}

/// Null distribution of the circular length-k window count in an honest
/// raw key, calibrated by Monte Carlo.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreakNullModel {
    pub n: usize,
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    pub mean: f64,
    pub sd: f64,
    /// Detection threshold for `z_streaks`: the larger of 3 and the
    /// calibrated `NULL_QUANTILE` quantile.
    pub critical_z: f64,
}

pub const NULL_QUANTILE: f64 = 0.998;
/// Two-sided threshold for the conclusive-count z-score (p ≈ 0.001).
pub const CONCLUSIVE_CRITICAL_Z: f64 = 3.29;

impl StreakNullModel {
    pub fn calibrate(n: usize, k: usize, runs: usize, seed: u64) -> Self {
        assert!(runs >= 2 && n >= 1 && k >= 1, "calibration needs runs >= 2");
        let mut counts: Vec<usize> = (0..runs as u64)
            .into_par_iter()
            .map(|i| bernoulli_bits(&mut stream(seed, i), P_HONEST, n).count_windows(k, true))
            .collect();
        let mean = counts.iter().sum::<usize>() as f64 / runs as f64;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let sd = var.sqrt().max(f64::MIN_POSITIVE);
        counts.sort_unstable();
        let idx = ((NULL_QUANTILE * runs as f64).ceil() as usize).clamp(1, runs) - 1;
        let analytic_mean = expected_streaks(n as f64, P_HONEST, k as f64);
        let quantile_z = (counts[idx] as f64 - analytic_mean) / sd;
        StreakNullModel {
            n,
            k,
            runs,
            seed,
            mean,
            sd,
            critical_z: quantile_z.max(3.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectionStats {
    pub conclusive: usize,
    pub windows: usize,
    /// Deviation of the conclusive count from Binomial(n, 1/4), in SDs.
    pub z_conclusive: f64,
    /// Deviation of the window count from `N/4^k`, in calibrated SDs.
    pub z_streaks: f64,
}

impl DetectionStats {
    pub fn flagged(&self, null: &StreakNullModel) -> bool {
        self.z_streaks > null.critical_z || self.z_conclusive.abs() > CONCLUSIVE_CRITICAL_Z
    }
}

pub fn bias_detection_statistic(t: &RawKeyTranscript, null: &StreakNullModel) -> Result<DetectionStats> {
    let n = t.len();
    if n < 100 {
        return Err(Error::invalid("bias detection needs at least 100 positions"));
    }
    if n != null.n {
        return Err(Error::LengthMismatch {
            expected: null.n,
            actual: n,
        });
    }
    let mask = t.conclusive_mask();
    let conclusive = mask.count_ones();
    let windows = mask.count_windows(null.k, true);
    let nf = n as f64;
    Ok(DetectionStats {
        conclusive,
        windows,
        z_conclusive: (conclusive as f64 - nf * P_HONEST) / (nf * P_HONEST * (1.0 - P_HONEST)).sqrt(),
        z_streaks: (windows as f64 - expected_streaks(nf, P_HONEST, null.k as f64)) / null.sd,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GroupGuessTally {
    /// Inconclusive positions in the group.
    pub x: usize,
    pub correct: usize,
    pub total: usize,
}

/// Splits the transcript into consecutive groups of `k` and scores Alice's
/// parity guess (XOR of her conclusive bits and inconclusive guesses) per
/// number of inconclusive positions. Index `x` of the result is the tally
/// for groups with `x` inconclusive positions.
pub fn group_guess_tally(t: &RawKeyTranscript, k: usize) -> Result<Vec<GroupGuessTally>> {
    if k == 0 || !t.len().is_multiple_of(k) {
        return Err(Error::invalid(format!(
            "transcript length {} is not a multiple of k={k}",
            t.len()
        )));
    }
    let mut tally: Vec<GroupGuessTally> = (0..=k)
        .map(|x| GroupGuessTally {
            x,
            correct: 0,
            total: 0,
        })
        .collect();
    for group in t.records().chunks(k) {
        let (mut truth, mut guess, mut x) = (false, false, 0);
        for r in group {
            truth ^= r.bob_bit.ok_or(Error::UndefinedBits)?;
            guess ^= r.verdict.best_guess().ok_or(Error::NoGuessInformation)?;
            x += usize::from(!r.verdict.is_conclusive());
        }
        tally[x].total += 1;
        tally[x].correct += usize::from(truth == guess);
    }
    Ok(tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{run_exchange, AliceStrategy, BobStrategy};
    use crate::quantum::P_USD;

    #[test]
    fn streak_examples() {
        assert!((expected_streaks(1e4, 0.25, 6.0) - 2.44140625).abs() < 1e-12);
        assert_eq!(expected_streaks(1234.0, 1.0, 9.0), 1234.0);
        let l = k_for_target(1e5, 6.1).unwrap().exact;
        assert!((expected_streaks(1e5, 0.25, l) - 6.1).abs() < 1e-9);
        let s = streak_stats(10_000, 0.25, 6);
        assert!((s.at_least_one_estimate - 0.84).abs() < 0.01);
    }

    #[test]
    fn markov_examples() {
        let c: f64 = 2.0;
        assert_eq!(markov_streak_bound(c, c * c), 0.5);
        assert_eq!(markov_streak_bound(0.0, 3.0), 0.0);
        assert_eq!(markov_streak_bound(5.0, 1.0), 1.0);
    }

    #[test]
    fn k_choice_examples() {
        assert!((k_for_target(1024.0, 1.0).unwrap().exact - 5.0).abs() < 1e-12);
        assert_eq!(k_for_target(1e6, 3.8).unwrap().recommended, 9);
        assert!((k_for_target(4.0, 1.0).unwrap().exact - 1.0).abs() < 1e-12);
        assert!(k_for_target(3.0, 3.0).is_err());
    }

    #[test]
    fn abort_probabilities() {
        assert!((abort_prob_original(1.0) - 0.3679).abs() < 1e-4);
        assert_eq!(abort_prob_original(0.0), 1.0);
        assert!((abort_prob_original(3.0) - 0.0498).abs() < 1e-4);
    }

    #[test]
    fn group_guess_law() {
        assert!((guess_prob_group(1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((guess_prob_group(2).unwrap() - 5.0 / 9.0).abs() < 1e-15);
        assert!(guess_prob_group(0).is_err());
        let mut last = 1.0;
        for x in 1..40 {
            let g = guess_prob_group(x).unwrap();
            assert!(g < last && g > 0.5 || (x > 30 && g >= 0.5));
            last = g;
        }
    }

    #[test]
    fn generalized_identity_against_brute_force() {
        // E[binom(X, k)] for X ~ Binomial(M, p) equals binom(M, k)·p^k.
        for (m, k, p) in [(29u64, 5u64, 0.25), (20, 8, 0.25), (41, 4, P_USD), (12, 3, 0.6)] {
            let brute: f64 = (0..=m)
                .map(|x| binom_f64(x, k) * binom_f64(m, x) * p.powi(x as i32) * (1.0 - p).powi((m - x) as i32))
                .sum();
            let s = generalized_stats(m, k, p).unwrap();
            assert!((brute - s.expected_survivors).abs() / brute < 1e-12);
            assert!((s.conditional_average * (1.0 - s.nobit) - s.expected_survivors).abs() / brute < 1e-12);
        }
    }

    #[test]
    fn generalized_degenerate_point() {
        let s = generalized_stats(7, 7, 1.0).unwrap();
        assert_eq!(s.nobit, 0.0);
        assert_eq!(s.conditional_average, 1.0);
        assert!(generalized_stats(3, 4, 0.25).is_err());
        assert!(generalized_stats(5, 4, 0.0).is_err());
    }

    #[test]
    fn binomial_tail_exact_for_quarter() {
        // For p = 1/4 the tail is an exact rational sum_x binom(M,x) 3^(M-x) / 4^M;
        // compare with u128 arithmetic where it fits.
        for m in [10u64, 29, 41, 58] {
            for k in [1u64, 4, 9] {
                let num: u128 = (0..k).map(|x| binom(m, x).unwrap() * 3u128.pow((m - x) as u32)).sum();
                let exact = num as f64 / 4f64.powi(m as i32);
                let got = binomial_cdf_below(m, 0.25, k);
                assert!((got - exact).abs() <= 1e-12 * exact.max(1e-300), "M={m} k={k}");
            }
        }
    }

    #[test]
    fn bias_attack_examples() {
        let s = bias_attack_stats(10_000, 6);
        assert!((s.e_plus - 566.32).abs() < 0.01, "{}", s.e_plus);
        assert!((s.e_minus - 0.0842).abs() < 1e-4, "{}", s.e_minus);
        assert!((s.ratio - 6726.0).abs() < 1.0, "{}", s.ratio);
        assert_eq!(bias_attack_stats(100, 1).ratio, 1.0);
        for (n, k) in [(10u64, 1u32), (10_000, 6), (100_000, 7), (1_000_000, 11)] {
            let s = bias_attack_stats(n, k);
            assert!((s.ratio * s.e_minus - s.e_plus).abs() <= 1e-9 * s.e_plus);
        }
    }

    #[test]
    fn streak_expectation_matches_simulation() {
        for n in [10_000usize, 100_000, 1_000_000] {
            for (pi, p) in [0.25, P_USD].into_iter().enumerate() {
                let k = (n as f64 / 4.0).ln() / (1.0 / p).ln();
                let k = k.round() as usize;
                let runs = 200;
                let counts: Vec<f64> = (0..runs)
                    .map(|r| bernoulli_bits(&mut stream(77 + pi as u64, r), p, n).count_windows(k, true) as f64)
                    .collect();
                let mean = counts.iter().sum::<f64>() / runs as f64;
                let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
                let expected = expected_streaks(n as f64, p, k as f64);
                assert!(
                    (mean - expected).abs() <= 3.0 * sd / (runs as f64).sqrt(),
                    "n={n} p={p} mean={mean} expected={expected}"
                );
            }
        }
    }

    #[test]
    fn detector_on_honest_and_biased() {
        let n = 100_000;
        let null = StreakNullModel::calibrate(n, 7, 4000, 1);
        assert!(null.critical_z >= 3.0);
        assert!((null.mean - expected_streaks(n as f64, 0.25, 7.0)).abs() < 0.3);
        let honest = run_exchange(
            n,
            AliceStrategy::HonestImmediate,
            &BobStrategy::Honest,
            &mut stream(2, 0),
        )
        .unwrap();
        let d = bias_detection_statistic(&honest, &null).unwrap();
        assert!(d.z_conclusive.abs() < 4.0);

        let all_plus = BobStrategy::Bias {
            plus: crate::bits::BitString::ones(n),
        };
        let biased = run_exchange(n, AliceStrategy::HonestImmediate, &all_plus, &mut stream(2, 1)).unwrap();
        let d = bias_detection_statistic(&biased, &null).unwrap();
        assert!(d.z_conclusive > 100.0 && d.flagged(&null));

        let split = run_exchange(
            n,
            AliceStrategy::HonestImmediate,
            &BobStrategy::split_attack(n),
            &mut stream(2, 2),
        )
        .unwrap();
        let d = bias_detection_statistic(&split, &null).unwrap();
        assert!(d.z_conclusive.abs() < 4.0);
        assert!(d.z_streaks > 100.0 && d.flagged(&null));

        let short = run_exchange(
            50,
            AliceStrategy::HonestImmediate,
            &BobStrategy::Honest,
            &mut stream(2, 3),
        )
        .unwrap();
        assert!(bias_detection_statistic(&short, &null).is_err());
    }

    #[test]
    fn group_tally_contracts() {
        let t = run_exchange(
            30,
            AliceStrategy::HonestImmediate,
            &BobStrategy::Honest,
            &mut stream(4, 4),
        )
        .unwrap();
        let tally = group_guess_tally(&t, 3).unwrap();
        assert_eq!(tally.iter().map(|g| g.total).sum::<usize>(), 10);
        assert_eq!(tally[0].correct, tally[0].total);
        assert!(group_guess_tally(&t, 4).is_err());
        let usd = run_exchange(
            30,
            AliceStrategy::UsdIndividual,
            &BobStrategy::Honest,
            &mut stream(4, 5),
        )
        .unwrap();
        assert!(
            matches!(group_guess_tally(&usd, 3), Err(Error::NoGuessInformation))
                || usd.conclusive_mask().count_ones() == 30
        );
    }
}
