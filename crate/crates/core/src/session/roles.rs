//! Alice, Bob and the referee as single-threaded state machines. Each
//! handler consumes one message and queues its replies; an `Err` carries
//! the abort reason.

use std::collections::BTreeMap;

use rand::Rng;

use crate::bits::BitString;
use crate::exchange::{prepare_bias, prepare_honest, usd_measurement, usd_verdict, AliceStrategy, BobStrategy};
use crate::extraction::{alice_known, greedy_shifts, xor_key, ExtractionScheme};
use crate::quantum::{conclusiveness, measure, Announcement, Basis, Conclusiveness, QubitState};
use crate::rng::Stream;
use crate::session::wire::*;
use crate::session::{announce_shift, decrypt_bit, encrypt_db};

pub const PROTOCOL_ORDER: &str = "protocol-order";
pub const RESTART_CAP: &str = "restart-cap";
pub const MALFORMED: &str = "malformed";
pub const PARAMETER_MISMATCH: &str = "parameter-mismatch";

pub(crate) type Outbox = Vec<(Role, WireMessage)>;
pub(crate) type Handled = std::result::Result<(), &'static str>;

fn order() -> &'static str {
    PROTOCOL_ORDER
}

fn parse_states(bytes: &[u8]) -> std::result::Result<Vec<QubitState>, &'static str> {
    bytes
        .iter()
        .map(|&b| QubitState::new(b).map_err(|_| MALFORMED))
        .collect()
}

fn parse_announcements(bytes: &[u8]) -> std::result::Result<Vec<Announcement>, &'static str> {
    bytes
        .iter()
        .map(|&b| Announcement::from_byte(b).map_err(|_| MALFORMED))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum AlicePhase {
    AwaitHello,
    Exchanging,
    AwaitEncDb,
    Done,
    Stopped,
}

#[derive(Default)]
struct AliceRound {
    attempt: u32,
    bases: Option<BitString>,
    announcements: Option<Vec<Announcement>>,
    outcomes: Option<Vec<Option<QubitState>>>,
    known: Option<BTreeMap<usize, bool>>,
}

pub(crate) struct Alice {
    strategy: AliceStrategy,
    restart_cap: u32,
    target: Option<usize>,
    rng: Stream,
    phase: AlicePhase,
    scheme: Option<ExtractionScheme>,
    rounds: Vec<AliceRound>,
    pub restarts: u32,
    pub chosen: Option<(usize, usize, bool)>,
    pub survivors: usize,
    pub retrieved: Option<bool>,
}

impl Alice {
    pub fn new(strategy: AliceStrategy, restart_cap: u32, target: Option<usize>, rng: Stream) -> Self {
        Alice {
            strategy,
            restart_cap,
            target,
            rng,
            phase: AlicePhase::AwaitHello,
            scheme: None,
            rounds: Vec::new(),
            restarts: 0,
            chosen: None,
            survivors: 0,
            retrieved: None,
        }
    }

    pub fn stop(&mut self) {
        self.phase = AlicePhase::Stopped;
    }

    pub fn is_stopped(&self) -> bool {
        self.phase == AlicePhase::Stopped
    }

    pub fn known_per_round(&self) -> Vec<usize> {
        self.rounds
            .iter()
            .map(|r| r.known.as_ref().map_or(0, BTreeMap::len))
            .collect()
    }

    fn scheme(&self) -> ExtractionScheme {
        self.scheme.expect("scheme is set once HELLO is accepted")
    }

    pub fn handle(&mut self, from: Role, msg: WireMessage, out: &mut Outbox) -> Handled {
        if self.phase == AlicePhase::Stopped {
            return Ok(());
        }
        match (from, msg) {
            (_, WireMessage::Abort(_)) => {
                self.phase = AlicePhase::Stopped;
                Ok(())
            }
            (Role::Bob, WireMessage::Hello(h)) if self.phase == AlicePhase::AwaitHello => self.on_hello(h, out),
            (Role::Bob, WireMessage::Announce(a)) if self.phase == AlicePhase::Exchanging => self.on_announce(a, out),
            (Role::Referee, WireMessage::MeasureResult(r)) if self.phase == AlicePhase::Exchanging => {
                self.on_result(r, out)
            }
            (Role::Bob, WireMessage::EncDb(e)) if self.phase == AlicePhase::AwaitEncDb => self.on_enc_db(e, out),
            _ => Err(order()),
        }
    }

    fn on_hello(&mut self, h: Hello, out: &mut Outbox) -> Handled {
        let scheme = ExtractionScheme::new(h.scheme, h.key_len).map_err(|_| PARAMETER_MISMATCH)?;
        if h.rounds == 0 {
            return Err(PARAMETER_MISMATCH);
        }
        if let Some(b) = self.target {
            if b >= h.key_len {
                return Err(PARAMETER_MISMATCH);
            }
        }
        self.scheme = Some(scheme);
        self.rounds = (0..h.rounds).map(|_| AliceRound::default()).collect();
        self.phase = AlicePhase::Exchanging;
        out.push((Role::Bob, WireMessage::Hello(h)));
        if self.strategy == AliceStrategy::HonestImmediate {
            for round in 0..self.rounds.len() {
                self.request_basis_measurement(round, out);
            }
        }
        Ok(())
    }

    fn request_basis_measurement(&mut self, round: usize, out: &mut Outbox) {
        let count = self.scheme().raw_len();
        let bases: BitString = (0..count).map(|_| self.rng.random::<bool>()).collect();
        out.push((
            Role::Referee,
            WireMessage::MeasureRequest(MeasureRequest {
                round,
                attempt: self.rounds[round].attempt,
                mode: MeasureMode::Basis,
                count,
                bases: Some(B64(bases.to_le_bytes())),
                announcements: None,
            }),
        ));
        self.rounds[round].bases = Some(bases);
    }

    fn current(&self, round: usize, attempt: u32) -> std::result::Result<(), &'static str> {
        match self.rounds.get(round) {
            Some(r) if r.attempt == attempt && r.known.is_none() => Ok(()),
            _ => Err(order()),
        }
    }

    fn on_announce(&mut self, a: Announce, out: &mut Outbox) -> Handled {
        self.current(a.round, a.attempt)?;
        if self.rounds[a.round].announcements.is_some() {
            return Err(order());
        }
        let raw_len = self.scheme().raw_len();
        let anns = parse_announcements(&a.pairs.0)?;
        if anns.len() != raw_len {
            return Err(MALFORMED);
        }
        if self.strategy == AliceStrategy::UsdIndividual {
            out.push((
                Role::Referee,
                WireMessage::MeasureRequest(MeasureRequest {
                    round: a.round,
                    attempt: a.attempt,
                    mode: MeasureMode::Usd,
                    count: raw_len,
                    bases: None,
                    announcements: Some(a.pairs.clone()),
                }),
            ));
        }
        self.rounds[a.round].announcements = Some(anns);
        self.try_finish_round(a.round, out)
    }

    fn on_result(&mut self, r: MeasureResult, out: &mut Outbox) -> Handled {
        self.current(r.round, r.attempt)?;
        let round = &self.rounds[r.round];
        let requested = match self.strategy {
            AliceStrategy::HonestImmediate => round.bases.is_some(),
            AliceStrategy::UsdIndividual => round.announcements.is_some(),
        };
        if !requested || round.outcomes.is_some() {
            return Err(order());
        }
        if r.outcomes.0.len() != self.scheme().raw_len() {
            return Err(MALFORMED);
        }
        let outcomes = r
            .outcomes
            .0
            .iter()
            .map(|&b| match b {
                USD_FAILURE if self.strategy == AliceStrategy::UsdIndividual => Ok(None),
                _ => QubitState::new(b).map(Some).map_err(|_| MALFORMED),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        self.rounds[r.round].outcomes = Some(outcomes);
        self.try_finish_round(r.round, out)
    }

    fn try_finish_round(&mut self, round: usize, out: &mut Outbox) -> Handled {
        let r = &self.rounds[round];
        let (Some(anns), Some(outcomes)) = (&r.announcements, &r.outcomes) else {
            return Ok(());
        };
        let verdicts = anns
            .iter()
            .zip(outcomes)
            .map(|(&ann, &outcome)| match self.strategy {
                AliceStrategy::HonestImmediate => conclusiveness(outcome.ok_or(MALFORMED)?, ann).map_err(|_| MALFORMED),
                AliceStrategy::UsdIndividual => match outcome {
                    Some(s) if !ann.contains(s) => Err(MALFORMED),
                    _ => Ok(usd_verdict(outcome)),
                },
            })
            .collect::<std::result::Result<Vec<Conclusiveness>, _>>()?;
        let known = alice_known(&verdicts, &self.scheme()).map_err(|_| MALFORMED)?;
        if known.is_empty() {
            return self.restart(round, out);
        }
        self.rounds[round].known = Some(known);
        if self.rounds.iter().all(|r| r.known.is_some()) {
            self.choose_and_shift(out)?;
        }
        Ok(())
    }

    fn restart(&mut self, round: usize, out: &mut Outbox) -> Handled {
        if self.restarts >= self.restart_cap {
            return Err(RESTART_CAP);
        }
        self.restarts += 1;
        let attempt = self.rounds[round].attempt + 1;
        self.rounds[round] = AliceRound {
            attempt,
            ..AliceRound::default()
        };
        out.push((Role::Bob, WireMessage::Restart(Restart { round, attempt })));
        if self.strategy == AliceStrategy::HonestImmediate {
            self.request_basis_measurement(round, out);
        }
        Ok(())
    }

    fn choose_and_shift(&mut self, out: &mut Outbox) -> Handled {
        let n = self.scheme().key_len();
        let known: Vec<&BTreeMap<usize, bool>> = self
            .rounds
            .iter()
            .map(|r| r.known.as_ref().expect("all rounds known"))
            .collect();
        let lists: Vec<Vec<usize>> = known.iter().map(|m| m.keys().copied().collect()).collect();
        let (shifts, survivors) = greedy_shifts(&lists, n);
        if survivors.is_empty() {
            let last = self.rounds.len() - 1;
            return self.restart(last, out);
        }
        let j = survivors[self.rng.random_range(0..survivors.len())];
        let ok_j = known
            .iter()
            .zip(&shifts)
            .fold(false, |acc, (m, &s)| acc ^ m[&((j + s) % n)]);
        let b = match self.target {
            Some(b) => b,
            None => self.rng.random_range(0..n),
        };
        self.survivors = survivors.len();
        self.chosen = Some((j, b, ok_j));
        self.phase = AlicePhase::AwaitEncDb;
        out.push((
            Role::Bob,
            WireMessage::Shift(Shift {
                dilution_shifts: shifts,
                shift: announce_shift(j, b, n),
            }),
        ));
        Ok(())
    }

    fn on_enc_db(&mut self, e: EncDb, out: &mut Outbox) -> Handled {
        let n = self.scheme().key_len();
        if e.len != n {
            return Err(MALFORMED);
        }
        let enc = BitString::from_le_bytes(&e.bits.0, n).map_err(|_| MALFORMED)?;
        let (_, b, ok_j) = self.chosen.expect("shift was announced");
        self.retrieved = Some(decrypt_bit(&enc, b, ok_j).map_err(|_| MALFORMED)?);
        self.phase = AlicePhase::Done;
        out.push((Role::Bob, WireMessage::Done(Done {})));
        out.push((Role::Referee, WireMessage::Done(Done {})));
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BobPhase {
    AwaitHello,
    AwaitShift,
    AwaitDone,
    Done,
    Stopped,
}

struct BobRound {
    attempt: u32,
    /// `None` for a cheating Bob, who holds no bit values.
    bits: Option<BitString>,
}

pub(crate) struct Bob {
    scheme: ExtractionScheme,
    rounds_n: usize,
    strategy: BobStrategy,
    database: BitString,
    rng: Stream,
    phase: BobPhase,
    rounds: Vec<BobRound>,
}

impl Bob {
    pub fn new(
        scheme: ExtractionScheme,
        rounds_n: usize,
        strategy: BobStrategy,
        database: BitString,
        rng: Stream,
    ) -> Self {
        Bob {
            scheme,
            rounds_n,
            strategy,
            database,
            rng,
            phase: BobPhase::AwaitHello,
            rounds: Vec::new(),
        }
    }

    pub fn stop(&mut self) {
        self.phase = BobPhase::Stopped;
    }

    pub fn is_stopped(&self) -> bool {
        self.phase == BobPhase::Stopped
    }

    fn hello(&self) -> Hello {
        Hello {
            scheme: self.scheme.kind(),
            key_len: self.scheme.key_len(),
            rounds: self.rounds_n,
        }
    }

    pub fn start(&mut self, out: &mut Outbox) {
        out.push((Role::Alice, WireMessage::Hello(self.hello())));
    }

    pub fn handle(&mut self, from: Role, msg: WireMessage, out: &mut Outbox) -> Handled {
        if self.phase == BobPhase::Stopped {
            return Ok(());
        }
        match (from, msg) {
            (_, WireMessage::Abort(_)) => {
                self.phase = BobPhase::Stopped;
                Ok(())
            }
            (Role::Alice, WireMessage::Hello(h)) if self.phase == BobPhase::AwaitHello => {
                if h != self.hello() {
                    return Err(PARAMETER_MISMATCH);
                }
                self.phase = BobPhase::AwaitShift;
                for round in 0..self.rounds_n {
                    self.rounds.push(BobRound { attempt: 0, bits: None });
                    self.prepare_round(round, out);
                }
                Ok(())
            }
            (Role::Alice, WireMessage::Restart(r)) if self.phase == BobPhase::AwaitShift => {
                match self.rounds.get(r.round) {
                    Some(round) if r.attempt == round.attempt + 1 => {}
                    _ => return Err(order()),
                }
                self.rounds[r.round].attempt = r.attempt;
                self.prepare_round(r.round, out);
                Ok(())
            }
            (Role::Alice, WireMessage::Shift(s)) if self.phase == BobPhase::AwaitShift => self.on_shift(s, out),
            (Role::Alice, WireMessage::Done(_)) if self.phase == BobPhase::AwaitDone => {
                self.phase = BobPhase::Done;
                Ok(())
            }
            _ => Err(order()),
        }
    }

    fn prepare_round(&mut self, round: usize, out: &mut Outbox) {
        let raw_len = self.scheme.raw_len();
        let mut states = Vec::with_capacity(raw_len);
        let mut pairs = Vec::with_capacity(raw_len);
        let mut bits = BitString::zeros(0);
        for i in 0..raw_len {
            let (sent, ann) = match &self.strategy {
                BobStrategy::Honest => {
                    let (bit, sent, ann) = prepare_honest(&mut self.rng);
                    bits.push(bit);
                    (sent, ann)
                }
                BobStrategy::Bias { plus } => prepare_bias(plus.get(i)),
            };
            states.push(sent.octant());
            pairs.push(ann.to_byte());
        }
        let attempt = self.rounds[round].attempt;
        self.rounds[round].bits = matches!(self.strategy, BobStrategy::Honest).then_some(bits);
        out.push((
            Role::Referee,
            WireMessage::StateDeposit(StateDeposit {
                round,
                attempt,
                states: B64(states),
            }),
        ));
        out.push((
            Role::Alice,
            WireMessage::Announce(Announce {
                round,
                attempt,
                pairs: B64(pairs),
            }),
        ));
    }

    fn on_shift(&mut self, s: Shift, out: &mut Outbox) -> Handled {
        let n = self.scheme.key_len();
        if s.dilution_shifts.len() != self.rounds_n || s.shift >= n || s.dilution_shifts.iter().any(|&x| x >= n) {
            return Err(MALFORMED);
        }
        let mut key = BitString::zeros(n);
        for (round, &shift) in self.rounds.iter().zip(&s.dilution_shifts) {
            let raw = round
                .bits
                .clone()
                .unwrap_or_else(|| BitString::zeros(self.scheme.raw_len()));
            let part = xor_key(&raw, &self.scheme).expect("raw length matches the scheme");
            key.xor_assign(&part.rotated(shift));
        }
        let enc = encrypt_db(&self.database, &key, s.shift).expect("database length matches the key");
        self.phase = BobPhase::AwaitDone;
        out.push((
            Role::Alice,
            WireMessage::EncDb(EncDb {
                len: n,
                bits: B64(enc.to_le_bytes()),
            }),
        ));
        Ok(())
    }
}

pub(crate) struct Referee {
    rng: Stream,
    deposits: BTreeMap<(usize, u32), Vec<QubitState>>,
    requests: BTreeMap<(usize, u32), MeasureRequest>,
    stopped: bool,
}

impl Referee {
    pub fn new(rng: Stream) -> Self {
        Referee {
            rng,
            deposits: BTreeMap::new(),
            requests: BTreeMap::new(),
            stopped: false,
        }
    }

    pub fn stop(&mut self) {
        self.stopped = true;
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn handle(&mut self, from: Role, msg: WireMessage, out: &mut Outbox) -> Handled {
        if self.stopped {
            return Ok(());
        }
        match (from, msg) {
            (_, WireMessage::Abort(_)) | (Role::Alice, WireMessage::Done(_)) => {
                self.stopped = true;
                Ok(())
            }
            (Role::Bob, WireMessage::StateDeposit(d)) => {
                let states = parse_states(&d.states.0)?;
                let key = (d.round, d.attempt);
                if self.deposits.contains_key(&key) {
                    return Err(order());
                }
                self.deposits.retain(|&(r, a), _| r != d.round || a > d.attempt);
                self.deposits.insert(key, states);
                self.try_measure(key, out)
            }
            (Role::Alice, WireMessage::MeasureRequest(q)) => {
                let key = (q.round, q.attempt);
                if self.requests.contains_key(&key) {
                    return Err(order());
                }
                self.requests.retain(|&(r, a), _| r != q.round || a > q.attempt);
                self.requests.insert(key, q);
                self.try_measure(key, out)
            }
            _ => Err(order()),
        }
    }

    fn try_measure(&mut self, key: (usize, u32), out: &mut Outbox) -> Handled {
        if !(self.deposits.contains_key(&key) && self.requests.contains_key(&key)) {
            return Ok(());
        }
        let states = self.deposits.remove(&key).expect("checked");
        let q = self.requests.remove(&key).expect("checked");
        if q.count != states.len() {
            return Err(MALFORMED);
        }
        let outcomes: Vec<u8> = match q.mode {
            MeasureMode::Basis => {
                let bytes = q.bases.as_ref().ok_or(MALFORMED)?;
                let bases = BitString::from_le_bytes(&bytes.0, q.count).map_err(|_| MALFORMED)?;
                states
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| measure(s, Basis::from_bit(bases.get(i)), &mut self.rng).octant())
                    .collect()
            }
            MeasureMode::Usd => {
                let bytes = q.announcements.as_ref().ok_or(MALFORMED)?;
                let anns = parse_announcements(&bytes.0)?;
                if anns.len() != q.count {
                    return Err(MALFORMED);
                }
                states
                    .iter()
                    .zip(&anns)
                    .map(|(&s, &ann)| usd_measurement(s, ann, &mut self.rng).map_or(USD_FAILURE, QubitState::octant))
                    .collect()
            }
        };
        out.push((
            Role::Alice,
            WireMessage::MeasureResult(MeasureResult {
                round: key.0,
                attempt: key.1,
                outcomes: B64(outcomes),
            }),
        ));
        Ok(())
    }
}
