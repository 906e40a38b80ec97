//! Repeated SARG04 rounds between an Alice and a Bob strategy.

use std::fmt::Write as _;

use rand::Rng;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::quantum::{
    conclusiveness, measure, overlap_sq, usd_success_prob, Announcement, Basis, Conclusiveness, QubitState,
};

/// Probability of a conclusive verdict when Bob sends ↙ and announces
/// {↑,→}: `1/2 + 1/(2√2)`.
pub const P_PLUS: f64 = 0.5 + 0.5 * std::f64::consts::FRAC_1_SQRT_2;
/// Same for ↗: `1/2 - 1/(2√2)`.
pub const P_MINUS: f64 = 0.5 - 0.5 * std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BobStrategy {
    /// Uniformly random SARG04 state, decoy drawn uniformly from the other basis.
    Honest,
    /// Always announces {↑,→}; sends ↙ (conclusive with `P_PLUS`) where the
    /// mask is set and ↗ (conclusive with `P_MINUS`) elsewhere. Bob learns no
    /// bit values this way.
    Bias { plus: BitString },
}

impl BobStrategy {
    /// Raises the first `round(P_MINUS · n)` positions to `P_PLUS` and lowers
    /// the rest to `P_MINUS`, leaving the overall conclusive rate at
    /// `2 · P_PLUS · P_MINUS = 1/4`.
    pub fn split_attack(n: usize) -> Self {
        let cut = split_point(n);
        BobStrategy::Bias {
            plus: BitString::from_indices(n, 0..cut),
        }
    }
}

/// Length of the high-conclusiveness segment of [`BobStrategy::split_attack`].
pub fn split_point(n: usize) -> usize {
    (P_MINUS * n as f64).round() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AliceStrategy {
    /// Measures each qubit on arrival in a uniformly random basis.
    HonestImmediate,
    /// Waits for the announcement and performs an individual unambiguous
    /// discrimination of the announced pair.
    UsdIndividual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawKeyRecord {
    pub index: usize,
    /// `None` when Bob sent a cheat state and has no bit value.
    pub bob_bit: Option<bool>,
    pub sent: QubitState,
    pub announcement: Announcement,
    /// Measured (or, for USD, identified) state; `None` on USD failure.
    pub outcome: Option<QubitState>,
    pub verdict: Conclusiveness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawKeyTranscript {
    records: Vec<RawKeyRecord>,
    conclusive: BitString,
}

/// Honest preparation: `(bit, sent state, announcement)`.
pub fn prepare_honest<R: Rng + ?Sized>(rng: &mut R) -> (bool, QubitState, Announcement) {
    let bit: bool = rng.random();
    let basis = Basis::from_bit(bit);
    let sent = basis.states()[rng.random_range(0..2)];
    let decoy = basis.other().states()[rng.random_range(0..2)];
    let ann = Announcement::new(sent, decoy).expect("sent and decoy lie in different bases");
    (bit, sent, ann)
}

/// Cheat preparation for one position of a biasing Bob.
pub fn prepare_bias(plus: bool) -> (QubitState, Announcement) {
    let sent = if plus {
        QubitState::SOUTH_WEST
    } else {
        QubitState::NORTH_EAST
    };
    let ann = Announcement::new(QubitState::UP, QubitState::RIGHT).expect("valid pair");
    (sent, ann)
}

/// Measurement in a random basis followed by the exclusion rule.
pub fn honest_measurement<R: Rng + ?Sized>(
    sent: QubitState,
    basis: Basis,
    ann: Announcement,
    rng: &mut R,
) -> (QubitState, Conclusiveness) {
    let outcome = measure(sent, basis, rng);
    let verdict = conclusiveness(outcome, ann).expect("basis measurement yields a basis state");
    (outcome, verdict)
}

/// Individual USD of the announced pair. On success returns the identified
/// state; a sent state outside the pair is identified as the closer
/// announced state, ties broken at random.
pub fn usd_measurement<R: Rng + ?Sized>(sent: QubitState, ann: Announcement, rng: &mut R) -> Option<QubitState> {
    if !rng.random_bool(usd_success_prob(ann)) {
        return None;
    }
    if ann.contains(sent) {
        return Some(sent);
    }
    let [a, b] = ann.states();
    let (oa, ob) = (overlap_sq(sent, a), overlap_sq(sent, b));
    let pick_b = match oa.partial_cmp(&ob) {
        Some(std::cmp::Ordering::Greater) => false,
        Some(std::cmp::Ordering::Less) => true,
        _ => rng.random(),
    };
    Some(if pick_b { b } else { a })
}

pub fn usd_verdict(identified: Option<QubitState>) -> Conclusiveness {
    match identified.and_then(QubitState::basis) {
        Some(basis) => Conclusiveness::Conclusive(basis.bit()),
        None => Conclusiveness::Inconclusive { guess: None },
    }
}

/// Simulates `n` SARG04 rounds.
pub fn run_exchange<R: Rng + ?Sized>(
    n: usize,
    alice: AliceStrategy,
    bob: &BobStrategy,
    rng: &mut R,
) -> Result<RawKeyTranscript> {
    if n == 0 {
        return Err(Error::invalid("exchange needs at least one round"));
    }
    if let BobStrategy::Bias { plus } = bob {
        if plus.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: plus.len(),
            });
        }
    }
    let mut records = Vec::with_capacity(n);
    for index in 0..n {
        let (bob_bit, sent, announcement) = match bob {
            BobStrategy::Honest => {
                let (bit, sent, ann) = prepare_honest(rng);
                (Some(bit), sent, ann)
            }
            BobStrategy::Bias { plus } => {
                let (sent, ann) = prepare_bias(plus.get(index));
                (None, sent, ann)
            }
        };
        let (outcome, verdict) = match alice {
            AliceStrategy::HonestImmediate => {
                let basis = Basis::from_bit(rng.random());
                let (outcome, verdict) = honest_measurement(sent, basis, announcement, rng);
                (Some(outcome), verdict)
            }
            AliceStrategy::UsdIndividual => {
                let identified = usd_measurement(sent, announcement, rng);
                (identified, usd_verdict(identified))
            }
        };
        records.push(RawKeyRecord {
            index,
            bob_bit,
            sent,
            announcement,
            outcome,
            verdict,
        });
    }
    Ok(RawKeyTranscript::from_records(records))
}

/// Exact probability that an honest Alice ends up conclusive when Bob sends
/// the diagonal state `sent` and announces `ann`.
pub fn bias_conclusive_probability(sent: QubitState, ann: Announcement) -> Result<f64> {
    if !sent.is_diagonal() {
        return Err(Error::NotDiagonal(sent.to_string()));
    }
    let mut p = 0.0;
    for basis in [Basis::UpDown, Basis::LeftRight] {
        for outcome in basis.states() {
            if conclusiveness(outcome, ann)?.is_conclusive() {
                p += 0.5 * overlap_sq(sent, outcome);
            }
        }
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuessStats {
    pub conclusive_fraction: f64,
    /// Fraction of inconclusive positions whose guess matches Bob's bit;
    /// `None` when there are no inconclusive positions.
    pub inconclusive_accuracy: Option<f64>,
}

pub fn guess_accuracy_stats(t: &RawKeyTranscript) -> Result<GuessStats> {
    let (mut inconclusive, mut correct) = (0usize, 0usize);
    for r in &t.records {
        let bob = r.bob_bit.ok_or(Error::UndefinedBits)?;
        if let Conclusiveness::Inconclusive { guess } = r.verdict {
            let guess = guess.ok_or(Error::NoGuessInformation)?;
            inconclusive += 1;
            correct += usize::from(guess == bob);
        }
    }
    Ok(GuessStats {
        conclusive_fraction: t.conclusive.count_ones() as f64 / t.len() as f64,
        inconclusive_accuracy: (inconclusive > 0).then(|| correct as f64 / inconclusive as f64),
    })
}

impl RawKeyTranscript {
    pub fn from_records(records: Vec<RawKeyRecord>) -> Self {
        let conclusive = records.iter().map(|r| r.verdict.is_conclusive()).collect();
        RawKeyTranscript { records, conclusive }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RawKeyRecord] {
        &self.records
    }

    pub fn conclusive_mask(&self) -> &BitString {
        &self.conclusive
    }

    pub fn conclusive_indices(&self) -> Vec<usize> {
        self.conclusive.iter_ones().collect()
    }

    pub fn verdicts(&self) -> Vec<Conclusiveness> {
        self.records.iter().map(|r| r.verdict).collect()
    }

    pub fn bob_bits(&self) -> Vec<Option<bool>> {
        self.records.iter().map(|r| r.bob_bit).collect()
    }

    /// One tab-separated line per record:
    /// `index  bob_bit  sent  pair  outcome  verdict`, with `-` for an
    /// undefined bit or missing outcome, pair as `lo,hi` octants and verdict
    /// as `C0`/`C1`/`I0`/`I1`/`I-`.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let [lo, hi] = r.announcement.states();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{},{}\t{}\t{}",
                r.index,
                bit_char(r.bob_bit),
                r.sent.octant(),
                lo.octant(),
                hi.octant(),
                r.outcome.map_or("-".to_string(), |s| s.octant().to_string()),
                match r.verdict {
                    Conclusiveness::Conclusive(b) => format!("C{}", bit_char(Some(b))),
                    Conclusiveness::Inconclusive { guess } => format!("I{}", bit_char(guess)),
                }
            );
        }
        out
    }

    pub fn parse_lines(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |detail: &str| Error::decode("transcript line", format!("line {}: {detail}", line_no + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            let [index, bob, sent, pair, outcome, verdict] = fields[..] else {
                return Err(bad("expected 6 tab-separated fields"));
            };
            let index: usize = index.parse().map_err(|_| bad("index"))?;
            if index != records.len() {
                return Err(bad("indices must be consecutive from 0"));
            }
            let octant = |s: &str| -> Result<QubitState> { QubitState::new(s.parse().map_err(|_| bad("octant"))?) };
            let (lo, hi) = pair.split_once(',').ok_or_else(|| bad("pair"))?;
            let announcement = Announcement::new(octant(lo)?, octant(hi)?)?;
            let outcome = match outcome {
                "-" => None,
                s => Some(octant(s)?),
            };
            let verdict = match verdict {
                "C0" => Conclusiveness::Conclusive(false),
                "C1" => Conclusiveness::Conclusive(true),
                "I0" => Conclusiveness::Inconclusive { guess: Some(false) },
                "I1" => Conclusiveness::Inconclusive { guess: Some(true) },
                "I-" => Conclusiveness::Inconclusive { guess: None },
                _ => return Err(bad("verdict")),
            };
            records.push(RawKeyRecord {
                index,
                bob_bit: parse_bit(bob).ok_or_else(|| bad("bob bit"))?,
                sent: octant(sent)?,
                announcement,
                outcome,
                verdict,
            });
        }
        Ok(RawKeyTranscript::from_records(records))
    }
}

fn bit_char(bit: Option<bool>) -> char {
    match bit {
        Some(true) => '1',
        Some(false) => '0',
        None => '-',
    }
}

fn parse_bit(s: &str) -> Option<Option<bool>> {
    match s {
        "0" => Some(Some(false)),
        "1" => Some(Some(true)),
        "-" => Some(None),
        _ => None,
    }
}
