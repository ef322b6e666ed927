#ifndef QCOMPLY_H
#define QCOMPLY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum QcStatus {
  QC_STATUS_OK = 0,
  QC_STATUS_NULL_ARGUMENT = 1,
  QC_STATUS_INVALID_UTF8 = 2,
  QC_STATUS_INVALID_JSON = 3,
  QC_STATUS_POLICY_ERROR = 4,
  QC_STATUS_CONTEXT_ERROR = 5,
  QC_STATUS_ROW_ERROR = 6,
  QC_STATUS_SESSION_CLOSED = 7,
  QC_STATUS_SOLVER_ERROR = 8,
  QC_STATUS_CACHE_ERROR = 9,
  QC_STATUS_PANIC = 10,
} QcStatus;

// Enforcement decision for one query.
typedef enum QcDecision {
  QC_DECISION_ALLOW = 0,
  QC_DECISION_DENY = 1,
} QcDecision;

// A loaded policy, its solver pool and its decision cache. Thread-safe.
typedef struct QcEngine QcEngine;

// One request's trace. Not thread-safe.
typedef struct QcSession QcSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates an engine from policy JSON. `options_json` may be NULL.
//
// # Safety
// `policy_json` and `options_json` must be NULL or NUL-terminated strings;
// `out` must be a valid pointer.
enum QcStatus qc_engine_new(const char *policy_json,
                            const char *options_json,
                            struct QcEngine **out);

// Releases an engine. Sessions created from it stay valid.
//
// # Safety
// `engine` must be NULL or a handle from [`qc_engine_new`] not yet freed.
void qc_engine_free(struct QcEngine *engine);

// Starts a request. `context_json` is an object such as `{"MyUId": 1}`.
//
// # Safety
// `engine` must be a live handle, `context_json` a NUL-terminated string and
// `out` a valid pointer.
enum QcStatus qc_session_begin(const struct QcEngine *engine,
                               const char *context_json,
                               struct QcSession **out);

// Checks one query. `params_json` (array) and `rows_json` (array of arrays)
// may be NULL. `report_json`, if not NULL, receives a JSON report.
//
// # Safety
// Pointers must be NULL where allowed, live handles, or NUL-terminated strings.
enum QcStatus qc_session_check(struct QcSession *session,
                               const char *sql,
                               const char *params_json,
                               const char *rows_json,
                               enum QcDecision *decision,
                               char **report_json);

// Ends the request and releases the session.
//
// # Safety
// `session` must be NULL or a handle from [`qc_session_begin`] not yet freed.
void qc_session_free(struct QcSession *session);

// Number of cached decision templates.
//
// # Safety
// `engine` must be a live handle and `out` a valid pointer.
enum QcStatus qc_engine_cache_len(const struct QcEngine *engine, uintptr_t *out);

// Serializes the decision cache as a JSON array.
//
// # Safety
// `engine` must be a live handle and `out` a valid pointer.
enum QcStatus qc_engine_dump_cache(const struct QcEngine *engine, char **out);

// Loads templates from a dump, re-verifying each one. `added` may be NULL.
//
// # Safety
// `engine` must be a live handle and `cache_json` a NUL-terminated string.
enum QcStatus qc_engine_load_cache(const struct QcEngine *engine,
                                   const char *cache_json,
                                   uintptr_t *added);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a string from this library not yet freed.
void qc_string_free(char *s);

// Message for the last failed call on this thread, or NULL. Valid until the
// next call on the same thread.
const char *qc_last_error(void);

// Static name of a status code.
const char *qc_status_name(enum QcStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCOMPLY_H */
