use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use qokd::exchange::{run_exchange, AliceStrategy, BobStrategy};
use qokd::extraction::extract;
use qokd::rng::stream;
use qokd::ExtractionScheme;
use qokd_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(qokd_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn closed_forms() {
    let mut m = 0u64;
    assert_eq!(unsafe { qokd_min_m(100_000, 6, &mut m) }, QOKD_OK);
    assert_eq!(m, 23);
    assert_eq!(unsafe { qokd_min_m(100_000, 0, &mut m) }, QOKD_ERR_INVALID);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { qokd_min_m(10, 2, ptr::null_mut()) }, QOKD_ERR_NULL);

    let (mut nobit, mut avg) = (0.0, 0.0);
    assert_eq!(
        unsafe { qokd_generalized_stats(42, 12, 0.25, &mut nobit, &mut avg) },
        QOKD_OK
    );
    assert!((avg - 1876.24).abs() < 0.01);
    assert!((nobit - 0.6487).abs() < 1e-4);
    assert_eq!(
        unsafe { qokd_generalized_stats(3, 4, 0.25, &mut nobit, &mut avg) },
        QOKD_ERR_INVALID
    );

    let (mut ep, mut em, mut ratio) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { qokd_bias_attack_stats(10_000, 6, &mut ep, &mut em, &mut ratio) },
        QOKD_OK
    );
    assert!((ep / em - ratio).abs() < 1e-6 * ratio);
}

#[test]
fn session_handle() {
    let mut params = QokdSessionParams {
        scheme: 0,
        n: 0,
        k: 0,
        m: 0,
        rounds: 0,
        seed: 0,
        restart_cap: 0,
        alice_usd: 0,
        use_tcp: 0,
        port: 0,
    };
    assert_eq!(unsafe { qokd_session_params_default(&mut params) }, QOKD_OK);
    params.n = 500;
    params.k = 3;
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { qokd_session_run(&params, &mut session) }, QOKD_OK);
    let (mut completed, mut bit, mut correct, mut restarts) = (0, 0, 0, 0u32);
    assert_eq!(
        unsafe { qokd_session_status(session, &mut completed, &mut bit, &mut correct, &mut restarts) },
        QOKD_OK
    );
    assert_eq!((completed, correct), (1, 1));
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { qokd_session_transcript_json(session, &mut json) }, QOKD_OK);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.lines().last().unwrap().contains("completed"));
    unsafe {
        qokd_string_free(json);
        qokd_session_free(session);
    }

    params.scheme = 9;
    assert_eq!(unsafe { qokd_session_run(&params, &mut session) }, QOKD_ERR_INVALID);
    params.scheme = QOKD_SCHEME_GENERALIZED;
    params.m = 5;
    assert_eq!(unsafe { qokd_session_run(&params, &mut session) }, QOKD_ERR_INVALID);
    assert!(last_error().contains("binom"));
    assert_eq!(unsafe { qokd_session_run(ptr::null(), &mut session) }, QOKD_ERR_NULL);
}

#[test]
fn keyview_handle() {
    let scheme = ExtractionScheme::modified(2, 64).unwrap();
    let t = run_exchange(
        64,
        AliceStrategy::HonestImmediate,
        &BobStrategy::Honest,
        &mut stream(3, 0),
    )
    .unwrap();
    let view = extract(&t, &scheme).unwrap();
    let bytes = view.to_bytes();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { qokd_keyview_decode(bytes.as_ptr(), bytes.len(), &mut h) },
        QOKD_OK
    );
    let (mut len, mut known) = (0u64, 0u64);
    unsafe {
        assert_eq!(qokd_keyview_len(h, &mut len), QOKD_OK);
        assert_eq!(qokd_keyview_known_count(h, &mut known), QOKD_OK);
    }
    assert_eq!(len, 64);
    assert_eq!(known as usize, view.alice_known.len());
    for i in 0..64u64 {
        let (mut b, mut k, mut v) = (9u8, 9u8, 9u8);
        unsafe {
            assert_eq!(qokd_keyview_bob_bit(h, i, &mut b), QOKD_OK);
            assert_eq!(qokd_keyview_alice_bit(h, i, &mut k, &mut v), QOKD_OK);
        }
        assert_eq!(b != 0, view.bob_key.get(i as usize));
        if k == 1 {
            assert_eq!(v, b, "honest known bits agree with Bob");
        }
    }
    let mut b = 0u8;
    assert_eq!(unsafe { qokd_keyview_bob_bit(h, 64, &mut b) }, QOKD_ERR_RANGE);
    unsafe { qokd_keyview_free(h) };

    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { qokd_keyview_decode(bytes.as_ptr(), bytes.len() - 1, &mut h) },
        QOKD_ERR_DECODE
    );
    assert!(h.is_null());
    assert_eq!(unsafe { qokd_keyview_decode(ptr::null(), 0, &mut h) }, QOKD_ERR_DECODE);
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Directory holding the build artifacts (`target/<profile>`).
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "qokd.h"

int main(void) {
    uint64_t m = 0;
    if (qokd_min_m(10000000000ull, 12, &m) != QOKD_OK || m != 42) return 1;
    QokdSessionParams params;
    if (qokd_session_params_default(&params) != QOKD_OK) return 2;
    params.n = 300;
    params.k = 3;
    QokdSession *session = NULL;
    if (qokd_session_run(&params, &session) != QOKD_OK) return 3;
    int32_t completed, bit, correct;
    uint32_t restarts;
    if (qokd_session_status(session, &completed, &bit, &correct, &restarts) != QOKD_OK) return 4;
    if (completed != 1 || correct != 1) return 5;
    char *json = NULL;
    if (qokd_session_transcript_json(session, &json) != QOKD_OK || strstr(json, "HELLO") == NULL) return 6;
    qokd_string_free(json);
    qokd_session_free(session);
    QokdKeyView *view = NULL;
    if (qokd_keyview_decode((const uint8_t *)"nope", 4, &view) != QOKD_ERR_DECODE) return 7;
    if (strlen(qokd_last_error()) == 0) return 8;
    printf("ok\n");
    return 0;
}
"#;

fn write_program(dir: &Path) -> PathBuf {
    let src = dir.join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    src
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = write_program(dir.path());
    let include = crate_dir().join("include");
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(extra)
            .args(["-Wall", "-Werror", "-fsyntax-only", "-I"])
            .arg(&include)
            .arg(&src)
            .status()
            .unwrap();
        assert!(status.success(), "{compiler} rejected the header");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let lib = artifact_dir().join("libqokd_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = write_program(dir.path());
    let exe = dir.path().join("prog");
    let status = Command::new("cc")
        .args(["-std=c99", "-I"])
        .arg(crate_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
}

#[test]
fn last_error_survives_round_trip() {
    let mut m = 0u64;
    unsafe { qokd_min_m(5, 0, &mut m) };
    let msg = last_error();
    assert!(msg.contains('k'));
    let c = CString::new(msg).unwrap();
    assert!(!c.as_bytes().is_empty());
    unsafe { qokd_min_m(5, 2, &mut m) };
    assert!(last_error().is_empty());
}
