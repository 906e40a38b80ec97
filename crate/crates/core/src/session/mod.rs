//! The three-phase protocol run as message-driven state machines.
//!
//! Bob holds the database, the referee stands in for the quantum channel and
//! Alice retrieves one database bit. Every message travels as a wire frame
//! through a [`Transport`]; a single-threaded scheduler delivers frames in
//! global FIFO order, so a session is a deterministic function of its
//! configuration and seed whatever carries the bytes.

mod roles;
pub mod transport;
pub mod wire;

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::exchange::{AliceStrategy, BobStrategy};
use crate::extraction::ExtractionScheme;
use crate::rng::stream;

pub use roles::{MALFORMED, PARAMETER_MISMATCH, PROTOCOL_ORDER, RESTART_CAP};
pub use transport::{InProcTransport, TcpTransport, Transport};
pub use wire::{decode_frame, encode_frame, Link, Role, WireMessage};

use roles::{Alice, Bob, Outbox, Referee};

pub const VERSION_MISMATCH: &str = "version-mismatch";
pub const STALLED: &str = "stalled";
pub const DEFAULT_RESTART_CAP: u32 = 16;

/// Shift Alice announces so that her known key bit `j` lines up with the
/// database index `b`: `(j - b) mod n`.
pub fn announce_shift(j: usize, b: usize, n: usize) -> usize {
    assert!(j < n && b < n, "indices must lie below n");
    (j + n - b) % n
}

/// `out[a] = db[a] XOR ok[(a + s) mod N]`.
pub fn encrypt_db(db: &BitString, ok: &BitString, s: usize) -> Result<BitString> {
    if db.len() != ok.len() {
        return Err(Error::LengthMismatch {
            expected: db.len(),
            actual: ok.len(),
        });
    }
    if db.is_empty() {
        return Ok(BitString::zeros(0));
    }
    let mut out = ok.rotated(s % ok.len());
    out.xor_assign(db);
    Ok(out)
}

pub fn decrypt_bit(enc: &BitString, b: usize, ok_j: bool) -> Result<bool> {
    if b >= enc.len() {
        return Err(Error::IndexOutOfRange {
            index: b,
            len: enc.len(),
        });
    }
    Ok(enc.get(b) ^ ok_j)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub scheme: ExtractionScheme,
    /// Number of oblivious keys diluted into the final one.
    pub rounds: usize,
    pub alice: AliceStrategy,
    pub bob: BobStrategy,
    pub seed: u64,
    pub restart_cap: u32,
    /// Bob's database; drawn from his seed stream when absent.
    pub database: Option<BitString>,
    /// Database index Alice wants; drawn from her seed stream when absent.
    pub target_index: Option<usize>,
}

impl SessionConfig {
    pub fn honest(scheme: ExtractionScheme, seed: u64) -> Self {
        SessionConfig {
            scheme,
            rounds: 1,
            alice: AliceStrategy::HonestImmediate,
            bob: BobStrategy::Honest,
            seed,
            restart_cap: DEFAULT_RESTART_CAP,
            database: None,
            target_index: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.scheme.key_len();
        if self.rounds == 0 {
            return Err(Error::invalid("a session needs at least one key round"));
        }
        if let BobStrategy::Bias { plus } = &self.bob {
            if plus.len() != self.scheme.raw_len() {
                return Err(Error::LengthMismatch {
                    expected: self.scheme.raw_len(),
                    actual: plus.len(),
                });
            }
        }
        if let Some(db) = &self.database {
            if db.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: db.len(),
                });
            }
        }
        if let Some(b) = self.target_index {
            if b >= n {
                return Err(Error::IndexOutOfRange { index: b, len: n });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Completed { retrieved_bit: bool, restarts: u32 },
    Aborted { reason: String, restarts: u32 },
}

impl SessionStatus {
    pub fn restarts(&self) -> u32 {
        match self {
            SessionStatus::Completed { restarts, .. } | SessionStatus::Aborted { restarts, .. } => *restarts,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    pub from: Role,
    pub to: Role,
    pub message: WireMessage,
}

/// Every delivered message in delivery order, plus the final status.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionTranscript {
    pub entries: Vec<TranscriptEntry>,
    pub status: SessionStatus,
}

impl SessionTranscript {
    /// One compact JSON object per line with sorted keys; the last line
    /// holds the status.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (seq, e) in self.entries.iter().enumerate() {
            let line = json!({
                "seq": seq,
                "from": e.from,
                "to": e.to,
                "type": e.message.type_name(),
                "payload": e.message.payload(),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out.push_str(&json!({ "status": self.status }).to_string());
        out.push('\n');
        out
    }

    pub fn count(&self, type_name: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.message.type_name() == type_name)
            .count()
    }

    /// Deliveries that would breach a party's information boundary: Alice
    /// must never see prepared states, Bob never Alice's measurement
    /// requests or results, and every message type must travel its fixed
    /// route.
    pub fn boundary_violations(&self) -> Vec<usize> {
        use Role::*;
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                let ok = match &e.message {
                    WireMessage::Hello(_) => matches!((e.from, e.to), (Bob, Alice) | (Alice, Bob)),
                    WireMessage::StateDeposit(_) => (e.from, e.to) == (Bob, Referee),
                    WireMessage::MeasureRequest(_) => (e.from, e.to) == (Alice, Referee),
                    WireMessage::MeasureResult(_) => (e.from, e.to) == (Referee, Alice),
                    WireMessage::Announce(_) | WireMessage::EncDb(_) => (e.from, e.to) == (Bob, Alice),
                    WireMessage::Restart(_) | WireMessage::Shift(_) => (e.from, e.to) == (Alice, Bob),
                    WireMessage::Done(_) => e.from == Alice,
                    WireMessage::Abort(_) => true,
                };
                !ok
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Harness-side result of a session: the transcript plus values read off
/// the parties' final states for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionOutcome {
    pub transcript: SessionTranscript,
    pub database: BitString,
    /// Alice's `(known key index j, database index b)` if she reached phase III.
    pub choice: Option<(usize, usize)>,
    /// Known key bits per round for the last attempt of each round.
    pub known_per_round: Vec<usize>,
    /// Alice's known bits after dilution.
    pub survivors: usize,
}

impl SessionOutcome {
    /// `Some(true)` when the session completed and returned `db[b]`.
    pub fn correct(&self) -> Option<bool> {
        match (&self.transcript.status, self.choice) {
            (SessionStatus::Completed { retrieved_bit, .. }, Some((_, b))) => {
                Some(*retrieved_bit == self.database.get(b))
            }
            _ => None,
        }
    }
}

pub struct Session<T: Transport> {
    transport: T,
    alice: Alice,
    bob: Bob,
    referee: Referee,
    database: BitString,
    queue: VecDeque<Link>,
    entries: Vec<TranscriptEntry>,
    abort: Option<String>,
}

const ALICE_STREAM: u64 = 0;
const BOB_STREAM: u64 = 1;
const REFEREE_STREAM: u64 = 2;

impl<T: Transport> Session<T> {
    pub fn new(config: &SessionConfig, transport: T) -> Result<Self> {
        config.validate()?;
        let mut bob_rng = stream(config.seed, BOB_STREAM);
        let n = config.scheme.key_len();
        let database = config
            .database
            .clone()
            .unwrap_or_else(|| (0..n).map(|_| bob_rng.random::<bool>()).collect());
        Ok(Session {
            transport,
            alice: Alice::new(
                config.alice,
                config.restart_cap,
                config.target_index,
                stream(config.seed, ALICE_STREAM),
            ),
            bob: Bob::new(
                config.scheme,
                config.rounds,
                config.bob.clone(),
                database.clone(),
                bob_rng,
            ),
            referee: Referee::new(stream(config.seed, REFEREE_STREAM)),
            database,
            queue: VecDeque::new(),
            entries: Vec::new(),
            abort: None,
        })
    }

    /// Puts a raw frame on a link ahead of anything the parties send.
    pub fn inject(&mut self, link: Link, frame: &[u8]) -> Result<()> {
        self.transport.send(link, frame)?;
        self.queue.push_back(link);
        Ok(())
    }

    fn send_all(&mut self, from: Role, out: Outbox) -> Result<()> {
        for (to, msg) in out {
            let link = Link::new(from, to);
            self.transport.send(link, &encode_frame(&msg))?;
            self.queue.push_back(link);
        }
        Ok(())
    }

    fn abort(&mut self, at: Role, reason: &str) -> Result<()> {
        if self.abort.is_none() {
            self.abort = Some(reason.to_string());
        }
        match at {
            Role::Alice => self.alice.stop(),
            Role::Bob => self.bob.stop(),
            Role::Referee => self.referee.stop(),
        }
        let peers: Outbox = Role::ALL
            .into_iter()
            .filter(|&r| r != at && !self.is_stopped(r))
            .map(|r| {
                (
                    r,
                    WireMessage::Abort(wire::Abort {
                        reason: reason.to_string(),
                    }),
                )
            })
            .collect();
        self.send_all(at, peers)
    }

    fn is_stopped(&self, role: Role) -> bool {
        match role {
            Role::Alice => self.alice.is_stopped(),
            Role::Bob => self.bob.is_stopped(),
            Role::Referee => self.referee.is_stopped(),
        }
    }

    /// Runs the session to completion. Transport failures are errors;
    /// protocol failures end in an `Aborted` status.
    pub fn run(mut self) -> Result<SessionOutcome> {
        let mut out = Vec::new();
        self.bob.start(&mut out);
        self.send_all(Role::Bob, out)?;
        while let Some(link) = self.queue.pop_front() {
            let frame = self.transport.recv(link)?;
            let msg = match decode_frame(&frame) {
                Ok(msg) => msg,
                Err(Error::VersionMismatch(_)) => {
                    self.abort(link.to, VERSION_MISMATCH)?;
                    continue;
                }
                Err(_) => {
                    self.abort(link.to, MALFORMED)?;
                    continue;
                }
            };
            self.entries.push(TranscriptEntry {
                from: link.from,
                to: link.to,
                message: msg.clone(),
            });
            let mut out = Vec::new();
            let handled = match link.to {
                Role::Alice => self.alice.handle(link.from, msg, &mut out),
                Role::Bob => self.bob.handle(link.from, msg, &mut out),
                Role::Referee => self.referee.handle(link.from, msg, &mut out),
            };
            match handled {
                Ok(()) => self.send_all(link.to, out)?,
                Err(reason) => self.abort(link.to, reason)?,
            }
        }
        let restarts = self.alice.restarts;
        let status = match (&self.abort, self.alice.retrieved) {
            (Some(reason), _) => SessionStatus::Aborted {
                reason: reason.clone(),
                restarts,
            },
            (None, Some(bit)) => SessionStatus::Completed {
                retrieved_bit: bit,
                restarts,
            },
            (None, None) => SessionStatus::Aborted {
                reason: STALLED.to_string(),
                restarts,
            },
        };
        Ok(SessionOutcome {
            transcript: SessionTranscript {
                entries: self.entries,
                status,
            },
            database: self.database,
            choice: self.alice.chosen.map(|(j, b, _)| (j, b)),
            known_per_round: self.alice.known_per_round(),
            survivors: self.alice.survivors,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProc,
    /// Loopback TCP with the referee listening on `port` (0 picks one).
    Tcp {
        port: u16,
    },
}

pub fn run_session(config: &SessionConfig, transport: TransportKind) -> Result<SessionOutcome> {
    match transport {
        TransportKind::InProc => Session::new(config, InProcTransport::new())?.run(),
        TransportKind::Tcp { port } => Session::new(config, TcpTransport::connect(port)?)?.run(),
    }
}
