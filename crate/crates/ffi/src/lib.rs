//! C ABI over the `qokd` crate.
//!
//! Every fallible function returns an `int32_t` status (`QOKD_OK` on
//! success) and writes results through out-pointers. On failure the
//! message is available from `qokd_last_error` on the same thread. Handles
//! are opaque and released with their `_free` function; strings returned
//! by the library are released with `qokd_string_free`.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access the function
//! performs; null out-pointers are reported as `QOKD_ERR_NULL`. Handles
//! must come from this library and must not be used after being freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qokd::analytics::{bias_attack_stats, generalized_stats};
use qokd::combinatorics::min_m;
use qokd::extraction::SchemeKind;
use qokd::session::{run_session, SessionConfig, SessionOutcome, SessionStatus, TransportKind};
use qokd::{AliceStrategy, Error, ExtractionScheme, ObliviousKeyView};

pub const QOKD_OK: i32 = 0;
pub const QOKD_ERR_NULL: i32 = 1;
pub const QOKD_ERR_INVALID: i32 = 2;
pub const QOKD_ERR_DECODE: i32 = 3;
pub const QOKD_ERR_RANGE: i32 = 4;
pub const QOKD_ERR_IO: i32 = 5;
pub const QOKD_ERR_PANIC: i32 = 6;

pub const QOKD_SCHEME_ORIGINAL: u8 = 0;
pub const QOKD_SCHEME_MODIFIED: u8 = 1;
pub const QOKD_SCHEME_GENERALIZED: u8 = 2;

/// Result of a completed or aborted session.
pub struct QokdSession {
    outcome: SessionOutcome,
}

/// Decoded oblivious key view.
pub struct QokdKeyView {
    view: ObliviousKeyView,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct QokdSessionParams {
    /// One of the `QOKD_SCHEME_*` values.
    pub scheme: u8,
    /// Key (database) length.
    pub n: u64,
    pub k: u64,
    /// Raw key length; generalized scheme only.
    pub m: u64,
    /// Number of keys diluted together.
    pub rounds: u32,
    pub seed: u64,
    pub restart_cap: u32,
    /// Nonzero for an Alice performing individual USD.
    pub alice_usd: u8,
    /// Nonzero for loopback TCP instead of in-process delivery.
    pub use_tcp: u8,
    /// TCP port; 0 picks a free one.
    pub port: u16,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Decode { .. } | Error::VersionMismatch(_) => QOKD_ERR_DECODE,
        Error::IndexOutOfRange { .. } => QOKD_ERR_RANGE,
        Error::Io(_) => QOKD_ERR_IO,
        _ => QOKD_ERR_INVALID,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), (i32, String)>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QOKD_OK
        }
        Ok(Err((code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            QOKD_ERR_PANIC
        }
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (code_of(&e), e.to_string())
}

fn null_err(name: &str) -> (i32, String) {
    (QOKD_ERR_NULL, format!("{name} is null"))
}

/// Writes `value` through `out`, failing on a null pointer.
unsafe fn put<T>(out: *mut T, name: &str, value: T) -> Result<(), (i32, String)> {
    if out.is_null() {
        return Err(null_err(name));
    }
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, (i32, String)> {
    unsafe { p.as_ref() }.ok_or_else(|| null_err(name))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn qokd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Smallest raw length `M` with `binom(M, k) >= n`.
#[no_mangle]
pub unsafe extern "C" fn qokd_min_m(n: u64, k: u64, out: *mut u64) -> i32 {
    guard(|| {
        if k == 0 {
            return Err((QOKD_ERR_INVALID, "k must be at least 1".into()));
        }
        unsafe { put(out, "out", min_m(n, k)) }
    })
}

/// No-survivor probability and conditional mean survivor count of the
/// generalized scheme.
#[no_mangle]
pub unsafe extern "C" fn qokd_generalized_stats(
    m: u64,
    k: u64,
    p: f64,
    nobit: *mut f64,
    conditional_average: *mut f64,
) -> i32 {
    guard(|| {
        let s = generalized_stats(m, k, p).map_err(lib_err)?;
        unsafe {
            put(nobit, "nobit", s.nobit)?;
            put(conditional_average, "conditional_average", s.conditional_average)
        }
    })
}

/// Expected streak counts in the raised and lowered segments of a split
/// biasing attack and their ratio.
#[no_mangle]
pub unsafe extern "C" fn qokd_bias_attack_stats(
    n: u64,
    k: u32,
    e_plus: *mut f64,
    e_minus: *mut f64,
    ratio: *mut f64,
) -> i32 {
    guard(|| {
        if k == 0 {
            return Err((QOKD_ERR_INVALID, "k must be at least 1".into()));
        }
        let s = bias_attack_stats(n, k);
        unsafe {
            put(e_plus, "e_plus", s.e_plus)?;
            put(e_minus, "e_minus", s.e_minus)?;
            put(ratio, "ratio", s.ratio)
        }
    })
}

/// Fills `out` with defaults: modified scheme, `n = 10000`, `k = 6`, one
/// round, seed 1, restart cap 16, honest Alice, in-process transport.
#[no_mangle]
pub unsafe extern "C" fn qokd_session_params_default(out: *mut QokdSessionParams) -> i32 {
    guard(|| unsafe {
        put(
            out,
            "out",
            QokdSessionParams {
                scheme: QOKD_SCHEME_MODIFIED,
                n: 10_000,
                k: 6,
                m: 0,
                rounds: 1,
                seed: 1,
                restart_cap: qokd::session::DEFAULT_RESTART_CAP,
                alice_usd: 0,
                use_tcp: 0,
                port: 0,
            },
        )
    })
}

fn to_usize(v: u64, name: &str) -> Result<usize, (i32, String)> {
    usize::try_from(v).map_err(|_| (QOKD_ERR_INVALID, format!("{name} is too large")))
}

/// Runs one honest-Bob session. Protocol aborts still yield a handle; check
/// `qokd_session_status`.
#[no_mangle]
pub unsafe extern "C" fn qokd_session_run(params: *const QokdSessionParams, out: *mut *mut QokdSession) -> i32 {
    guard(|| {
        let p = unsafe { borrow(params, "params") }?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        let (n, k) = (to_usize(p.n, "n")?, to_usize(p.k, "k")?);
        let kind = match p.scheme {
            QOKD_SCHEME_ORIGINAL => SchemeKind::Original { k },
            QOKD_SCHEME_MODIFIED => SchemeKind::Modified { k },
            QOKD_SCHEME_GENERALIZED => SchemeKind::Generalized {
                m: to_usize(p.m, "m")?,
                k,
            },
            other => return Err((QOKD_ERR_INVALID, format!("unknown scheme {other}"))),
        };
        let scheme = ExtractionScheme::new(kind, n).map_err(lib_err)?;
        let mut config = SessionConfig::honest(scheme, p.seed);
        config.rounds = p.rounds as usize;
        config.restart_cap = p.restart_cap;
        if p.alice_usd != 0 {
            config.alice = AliceStrategy::UsdIndividual;
        }
        let transport = if p.use_tcp != 0 {
            TransportKind::Tcp { port: p.port }
        } else {
            TransportKind::InProc
        };
        let outcome = run_session(&config, transport).map_err(lib_err)?;
        unsafe { out.write(Box::into_raw(Box::new(QokdSession { outcome }))) };
        Ok(())
    })
}

/// `completed` is 1 for a completed session and 0 for an aborted one;
/// `retrieved_bit` and `correct` are -1 unless the session completed.
#[no_mangle]
pub unsafe extern "C" fn qokd_session_status(
    session: *const QokdSession,
    completed: *mut i32,
    retrieved_bit: *mut i32,
    correct: *mut i32,
    restarts: *mut u32,
) -> i32 {
    guard(|| {
        let s = unsafe { borrow(session, "session") }?;
        let status = &s.outcome.transcript.status;
        let (done, bit) = match status {
            SessionStatus::Completed { retrieved_bit, .. } => (1, i32::from(*retrieved_bit)),
            SessionStatus::Aborted { .. } => (0, -1),
        };
        let ok = s.outcome.correct().map_or(-1, i32::from);
        unsafe {
            put(completed, "completed", done)?;
            put(retrieved_bit, "retrieved_bit", bit)?;
            put(correct, "correct", ok)?;
            put(restarts, "restarts", status.restarts())
        }
    })
}

/// Transcript as JSON lines, NUL-terminated. Release with `qokd_string_free`.
#[no_mangle]
pub unsafe extern "C" fn qokd_session_transcript_json(session: *const QokdSession, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let s = unsafe { borrow(session, "session") }?;
        let text = CString::new(s.outcome.transcript.to_json_lines()).expect("JSON has no NUL");
        unsafe { put(out, "out", text.into_raw()) }
    })
}

#[no_mangle]
pub unsafe extern "C" fn qokd_session_free(session: *mut QokdSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}

#[no_mangle]
pub unsafe extern "C" fn qokd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Decodes the binary key-view format.
#[no_mangle]
pub unsafe extern "C" fn qokd_keyview_decode(bytes: *const u8, len: usize, out: *mut *mut QokdKeyView) -> i32 {
    guard(|| {
        if bytes.is_null() && len > 0 {
            return Err(null_err("bytes"));
        }
        if out.is_null() {
            return Err(null_err("out"));
        }
        let data = if len == 0 {
            &[][..]
        } else {
            unsafe { std::slice::from_raw_parts(bytes, len) }
        };
        let view = ObliviousKeyView::from_bytes(data).map_err(lib_err)?;
        unsafe { out.write(Box::into_raw(Box::new(QokdKeyView { view }))) };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qokd_keyview_len(view: *const QokdKeyView, out: *mut u64) -> i32 {
    guard(|| {
        let v = unsafe { borrow(view, "view") }?;
        unsafe { put(out, "out", v.view.len() as u64) }
    })
}

/// Number of key bits Alice knows.
#[no_mangle]
pub unsafe extern "C" fn qokd_keyview_known_count(view: *const QokdKeyView, out: *mut u64) -> i32 {
    guard(|| {
        let v = unsafe { borrow(view, "view") }?;
        unsafe { put(out, "out", v.view.alice_known.len() as u64) }
    })
}

#[no_mangle]
pub unsafe extern "C" fn qokd_keyview_bob_bit(view: *const QokdKeyView, index: u64, out: *mut u8) -> i32 {
    guard(|| {
        let v = unsafe { borrow(view, "view") }?;
        let len = v.view.len();
        let i = usize::try_from(index)
            .ok()
            .filter(|&i| i < len)
            .ok_or((QOKD_ERR_RANGE, format!("index {index} out of range for length {len}")))?;
        unsafe { put(out, "out", u8::from(v.view.bob_key.get(i))) }
    })
}

/// Alice's value of key bit `index`: `known` is set to 0 when she does not
/// know it, and `value` is then left untouched.
#[no_mangle]
pub unsafe extern "C" fn qokd_keyview_alice_bit(
    view: *const QokdKeyView,
    index: u64,
    known: *mut u8,
    value: *mut u8,
) -> i32 {
    guard(|| {
        let v = unsafe { borrow(view, "view") }?;
        let len = v.view.len();
        if index >= len as u64 {
            return Err((QOKD_ERR_RANGE, format!("index {index} out of range for length {len}")));
        }
        match v.view.alice_known.get(&(index as usize)) {
            Some(&bit) => unsafe {
                put(known, "known", 1)?;
                put(value, "value", u8::from(bit))
            },
            None => unsafe { put(known, "known", 0) },
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn qokd_keyview_free(view: *mut QokdKeyView) {
    if !view.is_null() {
        drop(unsafe { Box::from_raw(view) });
    }
}
