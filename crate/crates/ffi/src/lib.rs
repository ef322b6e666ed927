//! C ABI for the compliance engine.
//!
//! Handles are opaque. Every function returns a [`QcStatus`]; on failure a
//! message for the calling thread is available from [`qc_last_error`].
//! Structured inputs (request context, parameters, result rows, options) are
//! passed as JSON text. Strings returned through out-pointers must be released
//! with [`qc_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use qcomply::engine::{Decision, Engine, EngineConfig, EngineError, Session};
use qcomply::schema::PolicyBundle;
use qcomply::solver::SolverConfig;
use qcomply::value::Value;
use serde_json::{json, Value as Json};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    PolicyError = 4,
    ContextError = 5,
    RowError = 6,
    SessionClosed = 7,
    SolverError = 8,
    CacheError = 9,
    Panic = 10,
}

/// Enforcement decision for one query.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QcDecision {
    Allow = 0,
    Deny = 1,
}

/// A loaded policy, its solver pool and its decision cache. Thread-safe.
pub struct QcEngine(Engine);

/// One request's trace. Not thread-safe.
pub struct QcSession(Session);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(QcStatus, String);

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Failure {
        let status = match e {
            EngineError::SessionClosed => QcStatus::SessionClosed,
            EngineError::RowArity { .. } | EngineError::RowType(_) => QcStatus::RowError,
            EngineError::Context(_) => QcStatus::ContextError,
            EngineError::Solver(_) => QcStatus::SolverError,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).expect("no interior NUL"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            QcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            QcStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(QcStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(QcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn json_arg(p: *const c_char, what: &str, default: Json) -> Result<Json, Failure> {
    if p.is_null() {
        return Ok(default);
    }
    serde_json::from_str(text(p, what)?).map_err(|e| Failure(QcStatus::InvalidJson, format!("{what}: {e}")))
}

fn values(j: &Json, what: &str) -> Result<Vec<Value>, Failure> {
    let bad = || Failure(QcStatus::InvalidJson, format!("{what} must be an array of scalars"));
    j.as_array().ok_or_else(bad)?.iter().map(|v| Value::from_json(v).ok_or_else(bad)).collect()
}

fn out_string(out: *mut *mut c_char, s: String) {
    let c = CString::new(s.replace('\0', " ")).expect("no interior NUL");
    // SAFETY: callers check `out` for NULL first.
    unsafe { *out = c.into_raw() };
}

fn null_check<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(QcStatus::NullArgument, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn config(options: &Json) -> Result<EngineConfig, Failure> {
    let bad = |m: &str| Failure(QcStatus::InvalidJson, format!("options: {m}"));
    let obj = options.as_object().ok_or_else(|| bad("must be an object"))?;
    let mut cfg = EngineConfig::default();
    for (k, v) in obj {
        match k.as_str() {
            "solvers" => {
                cfg.solvers = v
                    .as_array()
                    .ok_or_else(|| bad("solvers must be an array of command lines"))?
                    .iter()
                    .map(|s| s.as_str().and_then(SolverConfig::from_command_line).ok_or_else(|| bad("bad solver command")))
                    .collect::<Result<_, _>>()?;
            }
            "check_budget_ms" => {
                cfg.check_budget = Duration::from_millis(v.as_u64().ok_or_else(|| bad("check_budget_ms"))?);
            }
            "template_budget_ms" => {
                cfg.template.total_budget = Duration::from_millis(v.as_u64().ok_or_else(|| bad("template_budget_ms"))?);
            }
            "use_cache" => cfg.use_cache = v.as_bool().ok_or_else(|| bad("use_cache"))?,
            "log_only" => cfg.log_only = v.as_bool().ok_or_else(|| bad("log_only"))?,
            "cache_max_entries" => {
                cfg.cache_max_entries = Some(v.as_u64().ok_or_else(|| bad("cache_max_entries"))? as usize);
            }
            other => return Err(bad(&format!("unknown option {other}"))),
        }
    }
    Ok(cfg)
}

/// Creates an engine from policy JSON. `options_json` may be NULL.
///
/// # Safety
/// `policy_json` and `options_json` must be NULL or NUL-terminated strings;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qc_engine_new(
    policy_json: *const c_char,
    options_json: *const c_char,
    out: *mut *mut QcEngine,
) -> QcStatus {
    guard(|| {
        null_check(out, "out")?;
        let policy = PolicyBundle::from_json_str(text(policy_json, "policy_json")?)
            .map_err(|e| Failure(QcStatus::PolicyError, e.to_string()))?;
        let cfg = config(&json_arg(options_json, "options_json", json!({}))?)?;
        let engine = Engine::new(policy, cfg)?;
        *out = Box::into_raw(Box::new(QcEngine(engine)));
        Ok(())
    })
}

/// Releases an engine. Sessions created from it stay valid.
///
/// # Safety
/// `engine` must be NULL or a handle from [`qc_engine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qc_engine_free(engine: *mut QcEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Starts a request. `context_json` is an object such as `{"MyUId": 1}`.
///
/// # Safety
/// `engine` must be a live handle, `context_json` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qc_session_begin(
    engine: *const QcEngine,
    context_json: *const c_char,
    out: *mut *mut QcSession,
) -> QcStatus {
    guard(|| {
        null_check(engine, "engine")?;
        null_check(out, "out")?;
        let raw = json_arg(context_json, "context_json", json!({}))?;
        let obj = raw
            .as_object()
            .ok_or_else(|| Failure(QcStatus::InvalidJson, "context_json must be an object".into()))?;
        let mut ctx = BTreeMap::new();
        for (k, v) in obj {
            let v = Value::from_json(v)
                .ok_or_else(|| Failure(QcStatus::InvalidJson, format!("context value for {k}")))?;
            ctx.insert(k.clone(), v);
        }
        let session = (*engine).0.begin_request(&ctx)?;
        *out = Box::into_raw(Box::new(QcSession(session)));
        Ok(())
    })
}

/// Checks one query. `params_json` (array) and `rows_json` (array of arrays)
/// may be NULL. `report_json`, if not NULL, receives a JSON report.
///
/// # Safety
/// Pointers must be NULL where allowed, live handles, or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qc_session_check(
    session: *mut QcSession,
    sql: *const c_char,
    params_json: *const c_char,
    rows_json: *const c_char,
    decision: *mut QcDecision,
    report_json: *mut *mut c_char,
) -> QcStatus {
    guard(|| {
        null_check(session, "session")?;
        null_check(decision, "decision")?;
        let sql = text(sql, "sql")?;
        let params = values(&json_arg(params_json, "params_json", json!([]))?, "params_json")?;
        let rows_raw = json_arg(rows_json, "rows_json", json!([]))?;
        let rows = rows_raw
            .as_array()
            .ok_or_else(|| Failure(QcStatus::InvalidJson, "rows_json must be an array of rows".into()))?
            .iter()
            .map(|r| values(r, "rows_json row"))
            .collect::<Result<Vec<_>, _>>()?;
        let r = (*session).0.check_query(sql, &params, &rows)?;
        *decision = if r.decision == Decision::Allow { QcDecision::Allow } else { QcDecision::Deny };
        if !report_json.is_null() {
            let reason = match &r.decision {
                Decision::Allow => Json::Null,
                Decision::Deny(d) => Json::String(d.to_string()),
            };
            let report = json!({
                "decision": if r.decision.is_allow() { "allow" } else { "deny" },
                "reason": reason,
                "decided_by": r.decided_by.name(),
                "flagged": r.flagged.as_ref().map(|f| f.to_string()),
                "template_cached": r.template_cached,
                "solver_calls": r.solver_calls,
            });
            out_string(report_json, report.to_string());
        }
        Ok(())
    })
}

/// Ends the request and releases the session.
///
/// # Safety
/// `session` must be NULL or a handle from [`qc_session_begin`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qc_session_free(session: *mut QcSession) {
    if !session.is_null() {
        let mut s = Box::from_raw(session);
        s.0.end_request();
    }
}

/// Number of cached decision templates.
///
/// # Safety
/// `engine` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qc_engine_cache_len(engine: *const QcEngine, out: *mut usize) -> QcStatus {
    guard(|| {
        null_check(engine, "engine")?;
        null_check(out, "out")?;
        *out = (*engine).0.cache().len();
        Ok(())
    })
}

/// Serializes the decision cache as a JSON array.
///
/// # Safety
/// `engine` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qc_engine_dump_cache(engine: *const QcEngine, out: *mut *mut c_char) -> QcStatus {
    guard(|| {
        null_check(engine, "engine")?;
        null_check(out, "out")?;
        out_string(out, (*engine).0.dump_cache().to_string());
        Ok(())
    })
}

/// Loads templates from a dump, re-verifying each one. `added` may be NULL.
///
/// # Safety
/// `engine` must be a live handle and `cache_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qc_engine_load_cache(
    engine: *const QcEngine,
    cache_json: *const c_char,
    added: *mut usize,
) -> QcStatus {
    guard(|| {
        null_check(engine, "engine")?;
        null_check(cache_json, "cache_json")?;
        let j = json_arg(cache_json, "cache_json", Json::Null)?;
        let n = (*engine).0.load_cache(&j).map_err(|e| Failure(QcStatus::CacheError, e.to_string()))?;
        if !added.is_null() {
            *added = n;
        }
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn qc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map(|c| c.as_ptr()).unwrap_or(ptr::null()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn qc_status_name(status: QcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        QcStatus::Ok => c"ok",
        QcStatus::NullArgument => c"null argument",
        QcStatus::InvalidUtf8 => c"invalid UTF-8",
        QcStatus::InvalidJson => c"invalid JSON",
        QcStatus::PolicyError => c"policy error",
        QcStatus::ContextError => c"context error",
        QcStatus::RowError => c"row error",
        QcStatus::SessionClosed => c"session closed",
        QcStatus::SolverError => c"solver error",
        QcStatus::CacheError => c"cache error",
        QcStatus::Panic => c"panic",
    };
    s.as_ptr()
}
