//! Classical simulator and analytics toolkit for quantum oblivious key
//! distribution (QOKD).
//!
//! The crate covers the whole pipeline of a SARG04-based oblivious transfer:
//!
//! * [`quantum`]: the six planar qubit states, Born-rule measurement and the
//!   SARG04 exclusion rule.
//! * [`exchange`]: repeated SARG04 rounds between configurable Alice and Bob
//!   strategies, producing raw-key transcripts.
//! * [`extraction`]: oblivious keys under the original, sliding-window and
//!   combinatorial schemes, plus the dilution combiner.
//! * [`session`]: the three-phase protocol as message-driven state machines
//!   over an in-process or TCP transport.
//! * [`analytics`]: closed forms for streak counts, binomial tails and the
//!   bias-attack quantities, and a calibrated bias detector.
//! * [`experiments`]: the experiment harness behind the `qokd` binary.

pub mod analytics;
pub mod bits;
pub mod combinatorics;
pub mod error;
pub mod exchange;
pub mod experiments;
pub mod extraction;
pub mod quantum;
pub mod rng;
pub mod session;

pub use bits::BitString;
pub use error::{Error, Result};
pub use exchange::{AliceStrategy, BobStrategy, RawKeyRecord, RawKeyTranscript};
pub use extraction::{ExtractionScheme, ObliviousKeyView, SchemeKind};
pub use quantum::{Announcement, Basis, Conclusiveness, QubitState};
