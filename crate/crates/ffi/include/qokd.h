#ifndef QOKD_H
#define QOKD_H

/* Generated by cbindgen from the qokd-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define QOKD_OK 0

#define QOKD_ERR_NULL 1

#define QOKD_ERR_INVALID 2

#define QOKD_ERR_DECODE 3

#define QOKD_ERR_RANGE 4

#define QOKD_ERR_IO 5

#define QOKD_ERR_PANIC 6

#define QOKD_SCHEME_ORIGINAL 0

#define QOKD_SCHEME_MODIFIED 1

#define QOKD_SCHEME_GENERALIZED 2

/**
 * Decoded oblivious key view.
 */
typedef struct QokdKeyView QokdKeyView;

/**
 * Result of a completed or aborted session.
 */
typedef struct QokdSession QokdSession;

typedef struct QokdSessionParams {
  /**
   * One of the `QOKD_SCHEME_*` values.
   */
  uint8_t scheme;
  /**
   * Key (database) length.
   */
  uint64_t n;
  uint64_t k;
  /**
   * Raw key length; generalized scheme only.
   */
  uint64_t m;
  /**
   * Number of keys diluted together.
   */
  uint32_t rounds;
  uint64_t seed;
  uint32_t restart_cap;
  /**
   * Nonzero for an Alice performing individual USD.
   */
  uint8_t alice_usd;
  /**
   * Nonzero for loopback TCP instead of in-process delivery.
   */
  uint8_t use_tcp;
  /**
   * TCP port; 0 picks a free one.
   */
  uint16_t port;
} QokdSessionParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *qokd_last_error(void);

/**
 * Smallest raw length `M` with `binom(M, k) >= n`.
 */
int32_t qokd_min_m(uint64_t n, uint64_t k, uint64_t *out);

/**
 * No-survivor probability and conditional mean survivor count of the
 * generalized scheme.
 */
int32_t qokd_generalized_stats(uint64_t m,
                               uint64_t k,
                               double p,
                               double *nobit,
                               double *conditional_average);

/**
 * Expected streak counts in the raised and lowered segments of a split
 * biasing attack and their ratio.
 */
int32_t qokd_bias_attack_stats(uint64_t n,
                               uint32_t k,
                               double *e_plus,
                               double *e_minus,
                               double *ratio);

/**
 * Fills `out` with defaults: modified scheme, `n = 10000`, `k = 6`, one
 * round, seed 1, restart cap 16, honest Alice, in-process transport.
 */
int32_t qokd_session_params_default(struct QokdSessionParams *out);

/**
 * Runs one honest-Bob session. Protocol aborts still yield a handle; check
 * `qokd_session_status`.
 */
int32_t qokd_session_run(const struct QokdSessionParams *params, struct QokdSession **out);

/**
 * `completed` is 1 for a completed session and 0 for an aborted one;
 * `retrieved_bit` and `correct` are -1 unless the session completed.
 */
int32_t qokd_session_status(const struct QokdSession *session,
                            int32_t *completed,
                            int32_t *retrieved_bit,
                            int32_t *correct,
                            uint32_t *restarts);

/**
 * Transcript as JSON lines, NUL-terminated. Release with `qokd_string_free`.
 */
int32_t qokd_session_transcript_json(const struct QokdSession *session, char **out);

void qokd_session_free(struct QokdSession *session);

void qokd_string_free(char *s);

/**
 * Decodes the binary key-view format.
 */
int32_t qokd_keyview_decode(const uint8_t *bytes, size_t len, struct QokdKeyView **out);

int32_t qokd_keyview_len(const struct QokdKeyView *view, uint64_t *out);

/**
 * Number of key bits Alice knows.
 */
int32_t qokd_keyview_known_count(const struct QokdKeyView *view, uint64_t *out);

int32_t qokd_keyview_bob_bit(const struct QokdKeyView *view, uint64_t index, uint8_t *out);

/**
 * Alice's value of key bit `index`: `known` is set to 0 when she does not
 * know it, and `value` is then left untouched.
 */
int32_t qokd_keyview_alice_bit(const struct QokdKeyView *view,
                               uint64_t index,
                               uint8_t *known,
                               uint8_t *value);

void qokd_keyview_free(struct QokdKeyView *view);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QOKD_H */
