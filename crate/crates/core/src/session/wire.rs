//! Length-prefixed frames carrying canonical JSON payloads.
//!
//! ```text
//! payload length u32 BE | version u8 = 0x01 | type u8 | JSON payload
//! ```
//!
//! The JSON is compact with keys in sorted order. Bit strings travel as
//! base64 of their packed little-endian-bit bytes; state and announcement
//! lists travel as base64 of one byte per entry.

use std::io::{self, Read};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::extraction::SchemeKind;

pub const WIRE_VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 6;
/// Largest accepted JSON payload.
pub const MAX_PAYLOAD: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
    Referee,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Alice, Role::Bob, Role::Referee];

    pub fn name(self) -> &'static str {
        match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
            Role::Referee => "referee",
        }
    }
}

/// A directed channel between two roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub from: Role,
    pub to: Role,
}

impl Link {
    pub const ALL: [Link; 6] = [
        Link::new(Role::Alice, Role::Bob),
        Link::new(Role::Alice, Role::Referee),
        Link::new(Role::Bob, Role::Alice),
        Link::new(Role::Bob, Role::Referee),
        Link::new(Role::Referee, Role::Alice),
        Link::new(Role::Referee, Role::Bob),
    ];

    pub const fn new(from: Role, to: Role) -> Self {
        Link { from, to }
    }

    pub fn id(self) -> u8 {
        Link::ALL
            .iter()
            .position(|&l| l == self)
            .expect("links join distinct roles") as u8
    }

    pub fn from_id(id: u8) -> Option<Link> {
        Link::ALL.get(id as usize).copied()
    }
}

/// Byte string carried as standard base64.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct B64(pub Vec<u8>);

impl Serialize for B64 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for B64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD
            .decode(text.as_bytes())
            .map(B64)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub scheme: SchemeKind,
    pub key_len: usize,
    pub rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDeposit {
    pub round: usize,
    pub attempt: u32,
    /// One octant byte per qubit.
    pub states: B64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureMode {
    Basis,
    Usd,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureRequest {
    pub round: usize,
    pub attempt: u32,
    pub mode: MeasureMode,
    pub count: usize,
    /// Packed basis bits (1 = left-right), `basis` mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bases: Option<B64>,
    /// Announcement bytes, `usd` mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub announcements: Option<B64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureResult {
    pub round: usize,
    pub attempt: u32,
    /// One octant byte per qubit, [`USD_FAILURE`] where discrimination failed.
    pub outcomes: B64,
}

pub const USD_FAILURE: u8 = 0xFF;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Announce {
    pub round: usize,
    pub attempt: u32,
    pub pairs: B64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Restart {
    pub round: usize,
    pub attempt: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    pub dilution_shifts: Vec<usize>,
    pub shift: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncDb {
    pub len: usize,
    pub bits: B64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Done {}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Abort {
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireMessage {
    Hello(Hello),
    StateDeposit(StateDeposit),
    MeasureRequest(MeasureRequest),
    MeasureResult(MeasureResult),
    Announce(Announce),
    Restart(Restart),
    Shift(Shift),
    EncDb(EncDb),
    Done(Done),
    Abort(Abort),
}

impl WireMessage {
    pub fn type_code(&self) -> u8 {
        match self {
            WireMessage::Hello(_) => 1,
            WireMessage::StateDeposit(_) => 2,
            WireMessage::MeasureRequest(_) => 3,
            WireMessage::MeasureResult(_) => 4,
            WireMessage::Announce(_) => 5,
            WireMessage::Restart(_) => 6,
            WireMessage::Shift(_) => 7,
            WireMessage::EncDb(_) => 8,
            WireMessage::Done(_) => 9,
            WireMessage::Abort(_) => 10,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            WireMessage::Hello(_) => "HELLO",
            WireMessage::StateDeposit(_) => "STATE_DEPOSIT",
            WireMessage::MeasureRequest(_) => "MEASURE_REQUEST",
            WireMessage::MeasureResult(_) => "MEASURE_RESULT",
            WireMessage::Announce(_) => "ANNOUNCE",
            WireMessage::Restart(_) => "RESTART",
            WireMessage::Shift(_) => "SHIFT",
            WireMessage::EncDb(_) => "ENC_DB",
            WireMessage::Done(_) => "DONE",
            WireMessage::Abort(_) => "ABORT",
        }
    }

    /// Payload as a JSON value; object keys are kept sorted.
    pub fn payload(&self) -> serde_json::Value {
        let value = match self {
            WireMessage::Hello(p) => serde_json::to_value(p),
            WireMessage::StateDeposit(p) => serde_json::to_value(p),
            WireMessage::MeasureRequest(p) => serde_json::to_value(p),
            WireMessage::MeasureResult(p) => serde_json::to_value(p),
            WireMessage::Announce(p) => serde_json::to_value(p),
            WireMessage::Restart(p) => serde_json::to_value(p),
            WireMessage::Shift(p) => serde_json::to_value(p),
            WireMessage::EncDb(p) => serde_json::to_value(p),
            WireMessage::Done(p) => serde_json::to_value(p),
            WireMessage::Abort(p) => serde_json::to_value(p),
        };
        value.expect("payload types serialize infallibly")
    }

    fn from_payload(code: u8, json: &[u8]) -> Result<Self> {
        fn parse<T: DeserializeOwned>(json: &[u8]) -> Result<T> {
            serde_json::from_slice(json).map_err(|e| Error::decode("payload", e.to_string()))
        }
        Ok(match code {
            1 => WireMessage::Hello(parse(json)?),
            2 => WireMessage::StateDeposit(parse(json)?),
            3 => WireMessage::MeasureRequest(parse(json)?),
            4 => WireMessage::MeasureResult(parse(json)?),
            5 => WireMessage::Announce(parse(json)?),
            6 => WireMessage::Restart(parse(json)?),
            7 => WireMessage::Shift(parse(json)?),
            8 => WireMessage::EncDb(parse(json)?),
            9 => WireMessage::Done(parse(json)?),
            10 => WireMessage::Abort(parse(json)?),
            other => return Err(Error::decode("frame", format!("unknown message type {other}"))),
        })
    }
}

pub fn encode_frame(msg: &WireMessage) -> Vec<u8> {
    let json = serde_json::to_vec(&msg.payload()).expect("JSON values serialize infallibly");
    assert!(json.len() <= MAX_PAYLOAD, "payload exceeds the frame limit");
    let mut frame = Vec::with_capacity(HEADER_LEN + json.len());
    frame.extend_from_slice(&(json.len() as u32).to_be_bytes());
    frame.push(WIRE_VERSION);
    frame.push(msg.type_code());
    frame.extend_from_slice(&json);
    frame
}

/// Decodes one complete frame. A wrong version byte is reported as
/// [`Error::VersionMismatch`] before anything else is inspected.
pub fn decode_frame(frame: &[u8]) -> Result<WireMessage> {
    if frame.len() < HEADER_LEN {
        return Err(Error::decode("frame", "shorter than the header"));
    }
    if frame[4] != WIRE_VERSION {
        return Err(Error::VersionMismatch(frame[4]));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes")) as usize;
    if frame.len() != HEADER_LEN + len {
        return Err(Error::decode(
            "frame",
            format!("length prefix {len} but {} payload bytes", frame.len() - HEADER_LEN),
        ));
    }
    WireMessage::from_payload(frame[5], &frame[HEADER_LEN..])
}

/// Reads one frame (header included) from a byte stream; `None` on a clean
/// end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; HEADER_LEN];
    match r.read_exact(&mut header[..1]) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    r.read_exact(&mut header[1..])?;
    let len = u32::from_be_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut frame = vec![0u8; HEADER_LEN + len];
    frame[..HEADER_LEN].copy_from_slice(&header);
    r.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(Some(frame))
}
