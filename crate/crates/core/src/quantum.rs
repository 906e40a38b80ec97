//! Single-qubit model for SARG04.
//!
//! All states lie on one great circle of the Bloch sphere. A state is stored
//! as an octant index: its Bloch angle is `45° · octant`, so two states whose
//! octants differ by `d` have squared overlap `cos²(22.5° · d)`. The SARG04
//! states are ↑ (0), → (2), ↓ (4) and ← (6); the cheat states ↗ (1) and
//! ↙ (5) sit halfway between ↑/→ and ↓/← respectively.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `cos²(22.5° · d)` for `d = 0..8`.
const OVERLAP_SQ: [f64; 8] = [
    1.0,
    0.853_553_390_593_273_8,
    0.5,
    0.146_446_609_406_726_24,
    0.0,
    0.146_446_609_406_726_24,
    0.5,
    0.853_553_390_593_273_8,
];

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct QubitState(u8);

impl QubitState {
    pub const UP: QubitState = QubitState(0);
    pub const NORTH_EAST: QubitState = QubitState(1);
    pub const RIGHT: QubitState = QubitState(2);
    pub const DOWN: QubitState = QubitState(4);
    pub const SOUTH_WEST: QubitState = QubitState(5);
    pub const LEFT: QubitState = QubitState(6);

    pub const ALL: [QubitState; 6] = [
        Self::UP,
        Self::NORTH_EAST,
        Self::RIGHT,
        Self::DOWN,
        Self::SOUTH_WEST,
        Self::LEFT,
    ];

    /// Octants 3 and 7 are not used by the protocol and are rejected.
    pub fn new(octant: u8) -> Result<Self> {
        match octant {
            0 | 1 | 2 | 4 | 5 | 6 => Ok(QubitState(octant)),
            other => Err(Error::InvalidOctant(other)),
        }
    }

    pub fn octant(self) -> u8 {
        self.0
    }

    pub fn basis(self) -> Option<Basis> {
        match self.0 {
            0 | 4 => Some(Basis::UpDown),
            2 | 6 => Some(Basis::LeftRight),
            _ => None,
        }
    }

    pub fn is_diagonal(self) -> bool {
        self.basis().is_none()
    }

    pub fn orthogonal(self) -> QubitState {
        QubitState((self.0 + 4) % 8)
    }

    pub fn arrow(self) -> &'static str {
        match self.0 {
            0 => "↑",
            1 => "↗",
            2 => "→",
            4 => "↓",
            5 => "↙",
            _ => "←",
        }
    }
}

impl TryFrom<u8> for QubitState {
    type Error = Error;

    fn try_from(octant: u8) -> Result<Self> {
        QubitState::new(octant)
    }
}

impl From<QubitState> for u8 {
    fn from(s: QubitState) -> u8 {
        s.0
    }
}

impl fmt::Debug for QubitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.arrow())
    }
}

impl fmt::Display for QubitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.arrow())
    }
}

/// Preparation basis. Up-down encodes bit 0, left-right encodes bit 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    UpDown,
    LeftRight,
}

impl Basis {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Basis::LeftRight
        } else {
            Basis::UpDown
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, Basis::LeftRight)
    }

    pub fn states(self) -> [QubitState; 2] {
        match self {
            Basis::UpDown => [QubitState::UP, QubitState::DOWN],
            Basis::LeftRight => [QubitState::RIGHT, QubitState::LEFT],
        }
    }

    pub fn other(self) -> Basis {
        Basis::from_bit(!self.bit())
    }
}

/// The state pair Bob announces after sending: the sent state and a decoy
/// from the other basis, stored in ascending octant order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Announcement {
    lo: QubitState,
    hi: QubitState,
}

impl Announcement {
    pub fn new(a: QubitState, b: QubitState) -> Result<Self> {
        match (a.basis(), b.basis()) {
            (Some(x), Some(y)) if x != y => Ok(Announcement {
                lo: a.min(b),
                hi: a.max(b),
            }),
            _ => Err(Error::InvalidAnnouncement(a.to_string(), b.to_string())),
        }
    }

    pub fn states(self) -> [QubitState; 2] {
        [self.lo, self.hi]
    }

    pub fn contains(self, s: QubitState) -> bool {
        self.lo == s || self.hi == s
    }

    /// One-byte encoding: low nibble holds the lower octant.
    pub fn to_byte(self) -> u8 {
        self.lo.0 | (self.hi.0 << 4)
    }

    pub fn from_byte(byte: u8) -> Result<Self> {
        let a = QubitState::new(byte & 0x0f)?;
        let b = QubitState::new(byte >> 4)?;
        if a >= b {
            return Err(Error::decode("announcement", format!("non-canonical byte {byte:#04x}")));
        }
        Announcement::new(a, b)
    }
}

impl fmt::Display for Announcement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.lo, self.hi)
    }
}

/// Alice's verdict on one raw-key position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Conclusiveness {
    Conclusive(bool),
    /// `guess` is `None` when the measurement carries no usable guess, as
    /// for a failed unambiguous discrimination.
    Inconclusive {
        guess: Option<bool>,
    },
}

impl Conclusiveness {
    pub fn is_conclusive(self) -> bool {
        matches!(self, Conclusiveness::Conclusive(_))
    }

    pub fn conclusive_bit(self) -> Option<bool> {
        match self {
            Conclusiveness::Conclusive(b) => Some(b),
            Conclusiveness::Inconclusive { .. } => None,
        }
    }

    /// The conclusive bit, or the inconclusive guess if there is one.
    pub fn best_guess(self) -> Option<bool> {
        match self {
            Conclusiveness::Conclusive(b) => Some(b),
            Conclusiveness::Inconclusive { guess } => guess,
        }
    }
}

pub fn overlap_sq(a: QubitState, b: QubitState) -> f64 {
    OVERLAP_SQ[((a.0 + 8 - b.0) % 8) as usize]
}

/// Projective measurement of `state` in `basis`, returning the outcome state.
pub fn measure<R: Rng + ?Sized>(state: QubitState, basis: Basis, rng: &mut R) -> QubitState {
    let [first, second] = basis.states();
    if rng.random::<f64>() < overlap_sq(state, first) {
        first
    } else {
        second
    }
}

/// SARG04 exclusion rule.
///
/// An outcome orthogonal to exactly one announced state rules it out, so the
/// other announced state was sent. Otherwise the verdict is inconclusive and
/// the guess is the basis bit of the announced state closest to the outcome
/// (ties toward bit 0).
pub fn conclusiveness(outcome: QubitState, ann: Announcement) -> Result<Conclusiveness> {
    if outcome.is_diagonal() {
        return Err(Error::NotBasisOutcome(outcome.to_string()));
    }
    let [a, b] = ann.states();
    let bit_of = |s: QubitState| s.basis().map(Basis::bit).unwrap_or(false);
    let excludes_a = overlap_sq(outcome, a) == 0.0;
    let excludes_b = overlap_sq(outcome, b) == 0.0;
    let verdict = match (excludes_a, excludes_b) {
        (true, false) => Conclusiveness::Conclusive(bit_of(b)),
        (false, true) => Conclusiveness::Conclusive(bit_of(a)),
        _ => {
            let (oa, ob) = (overlap_sq(outcome, a), overlap_sq(outcome, b));
            let guess = if oa > ob {
                bit_of(a)
            } else if ob > oa {
                bit_of(b)
            } else {
                false
            };
            Conclusiveness::Inconclusive { guess: Some(guess) }
        }
    };
    Ok(verdict)
}

/// Optimal unambiguous-discrimination success probability `1 - |⟨a|b⟩|` for
/// two pure states with the given squared overlap.
pub fn usd_success_for_overlap(overlap_sq: f64) -> f64 {
    1.0 - overlap_sq.sqrt()
}

pub fn usd_success_prob(ann: Announcement) -> f64 {
    let [a, b] = ann.states();
    usd_success_for_overlap(overlap_sq(a, b))
}

/// `1 - 1/√2`, the USD success probability for every SARG04 pair.
pub const P_USD: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use QubitState as S;

    fn ann(a: QubitState, b: QubitState) -> Announcement {
        Announcement::new(a, b).unwrap()
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_sq(S::UP, S::UP), 1.0);
        assert_eq!(overlap_sq(S::UP, S::RIGHT), 0.5);
        assert_eq!(overlap_sq(S::UP, S::DOWN), 0.0);
        assert_eq!(overlap_sq(S::LEFT, S::RIGHT), 0.0);
        let c = (22.5f64).to_radians().cos().powi(2);
        assert!((overlap_sq(S::UP, S::NORTH_EAST) - c).abs() < 1e-15);
        assert!((overlap_sq(S::DOWN, S::NORTH_EAST) - (1.0 - c)).abs() < 1e-15);
    }

    #[test]
    fn overlap_table_matches_cosine() {
        for a in S::ALL {
            for b in S::ALL {
                let d = (a.octant() as f64 - b.octant() as f64) * 22.5;
                let expected = d.to_radians().cos().powi(2);
                assert!((overlap_sq(a, b) - expected).abs() < 1e-15);
                assert_eq!(overlap_sq(a, b), overlap_sq(b, a));
            }
        }
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        for s in S::ALL {
            for basis in [Basis::UpDown, Basis::LeftRight] {
                let [x, y] = basis.states();
                assert_eq!(overlap_sq(s, x) + overlap_sq(s, y), 1.0);
            }
        }
    }

    #[test]
    fn rejects_reserved_octants() {
        assert!(S::new(3).is_err());
        assert!(S::new(7).is_err());
        assert!(S::new(8).is_err());
        assert_eq!(S::new(5).unwrap(), S::SOUTH_WEST);
    }

    #[test]
    fn measurement_statistics() {
        let mut rng = stream(3, 0);
        assert!((0..1000).all(|_| measure(S::UP, Basis::UpDown, &mut rng) == S::UP));
        let n = 200_000;
        let left = (0..n)
            .filter(|_| measure(S::UP, Basis::LeftRight, &mut rng) == S::LEFT)
            .count();
        assert!((left as f64 / n as f64 - 0.5).abs() < 0.005);
        let up = (0..n)
            .filter(|_| measure(S::NORTH_EAST, Basis::UpDown, &mut rng) == S::UP)
            .count();
        assert!((up as f64 / n as f64 - overlap_sq(S::UP, S::NORTH_EAST)).abs() < 0.005);
    }

    #[test]
    fn exclusion_rule_examples() {
        let pair = ann(S::UP, S::RIGHT);
        assert_eq!(
            conclusiveness(S::LEFT, pair).unwrap(),
            Conclusiveness::Conclusive(false)
        );
        assert_eq!(conclusiveness(S::DOWN, pair).unwrap(), Conclusiveness::Conclusive(true));
        assert_eq!(
            conclusiveness(S::UP, pair).unwrap(),
            Conclusiveness::Inconclusive { guess: Some(false) }
        );
        assert_eq!(
            conclusiveness(S::RIGHT, pair).unwrap(),
            Conclusiveness::Inconclusive { guess: Some(true) }
        );
        assert!(matches!(
            conclusiveness(S::NORTH_EAST, pair),
            Err(Error::NotBasisOutcome(_))
        ));
    }

    #[test]
    fn never_conclusive_on_announced_state() {
        for a in [S::UP, S::DOWN] {
            for b in [S::RIGHT, S::LEFT] {
                let pair = ann(a, b);
                for s in pair.states() {
                    assert!(!conclusiveness(s, pair).unwrap().is_conclusive());
                }
            }
        }
    }

    #[test]
    fn announcement_validation_and_encoding() {
        assert!(Announcement::new(S::UP, S::DOWN).is_err());
        assert!(Announcement::new(S::UP, S::NORTH_EAST).is_err());
        let p = ann(S::LEFT, S::UP);
        assert_eq!(p.states(), [S::UP, S::LEFT]);
        assert_eq!(p, ann(S::UP, S::LEFT));
        assert_eq!(Announcement::from_byte(p.to_byte()).unwrap(), p);
        assert!(Announcement::from_byte(0x06 << 4).is_ok());
        assert!(Announcement::from_byte(0x60).is_ok());
        assert!(Announcement::from_byte(0x06).is_err());
    }

    #[test]
    fn usd_probabilities() {
        let expected = 1.0 - 1.0 / 2f64.sqrt();
        assert!((usd_success_prob(ann(S::UP, S::RIGHT)) - expected).abs() < 1e-15);
        assert!((usd_success_prob(ann(S::DOWN, S::LEFT)) - expected).abs() < 1e-15);
        assert!((expected - 0.2929).abs() < 1e-4);
        assert_eq!(usd_success_for_overlap(0.0), 1.0);
        assert!((P_USD - expected).abs() < 1e-15);
    }
}
