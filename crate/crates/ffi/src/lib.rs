//! C ABI over the session-search toolkit.
//!
//! Conventions: every function returns an [`SgrStatus`]; results come back
//! through out-pointers; handles are opaque and released with their matching
//! `_free` function; strings returned by the library are released with
//! [`sgr_string_free`]. On any non-`Ok` status the per-thread error message
//! is available via [`sgr_last_error_message`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use sgr_core::grammar::{parse_graph, serialize_graph, truncate_graph_text};
use sgr_core::graph::{build_graph, SessionGraph};
use sgr_core::loss;
use sgr_core::rank::{emit_run_file, rank_candidates, RankOptions};
use sgr_core::scorer::{ContinuationScore, MockScorer};
use sgr_core::session::{compute_stats, make_context, parse_session_str, Session};

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Session log validation failed.
    ParseError = 3,
    /// Index or step out of range.
    OutOfRange = 4,
    /// Symbolic grammar rejected the input.
    GrammarError = 5,
    /// Scoring failed.
    ScorerError = 6,
    /// Loss computation rejected its inputs.
    LossError = 7,
    /// Run/qrels evaluation failed.
    EvalError = 8,
    /// Unexpected internal failure.
    Internal = 9,
}

/// Opaque handle over a parsed session list.
pub struct SgrSessions {
    sessions: Vec<Session>,
}

/// Opaque handle over one session graph.
pub struct SgrGraph {
    graph: SessionGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn guard<F: FnOnce() -> SgrStatus>(f: F) -> SgrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            SgrStatus::Internal
        }
    }
}

/// Read a C string argument; sets the error state on failure.
///
/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, SgrStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(SgrStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SgrStatus::InvalidUtf8
    })
}

fn return_string(s: String, out: *mut *mut c_char) -> SgrStatus {
    let c = match CString::new(s.replace('\0', " ")) {
        Ok(c) => c,
        Err(_) => {
            set_error("output contained an interior NUL");
            return SgrStatus::Internal;
        }
    };
    unsafe { *out = c.into_raw() };
    SgrStatus::Ok
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn sgr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent error on this thread, or null. Free with
/// [`sgr_string_free`].
#[no_mangle]
pub extern "C" fn sgr_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by this library and not yet
/// freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn sgr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a session log (one JSON object per line). Strict: the first invalid
/// line fails the whole call with [`SgrStatus::ParseError`].
///
/// # Safety
/// `jsonl` must be a valid NUL-terminated string; `out` must be a valid
/// pointer. The returned handle is freed with [`sgr_sessions_free`].
#[no_mangle]
pub unsafe extern "C" fn sgr_sessions_parse(
    jsonl: *const c_char,
    out: *mut *mut SgrSessions,
) -> SgrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return SgrStatus::NullArgument;
        }
        let text = match read_str(jsonl) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let (sessions, errors) = parse_session_str(text);
        if let Some(first) = errors.first() {
            set_error(&format!("{} invalid lines; first: {first}", errors.len()));
            return SgrStatus::ParseError;
        }
        *out = Box::into_raw(Box::new(SgrSessions { sessions }));
        SgrStatus::Ok
    })
}

/// # Safety
/// `handle` must come from [`sgr_sessions_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sgr_sessions_free(handle: *mut SgrSessions) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live sessions handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_sessions_count(
    handle: *const SgrSessions,
    out: *mut usize,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        *out = (*handle).sessions.len();
        SgrStatus::Ok
    })
}

/// Corpus statistics as a JSON string.
///
/// # Safety
/// `handle` must be a live sessions handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_sessions_stats_json(
    handle: *const SgrSessions,
    out: *mut *mut c_char,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        match compute_stats(&(*handle).sessions) {
            Ok(stats) => {
                return_string(serde_json::to_string(&stats).expect("stats serialize"), out)
            }
            Err(e) => {
                set_error(&e.to_string());
                SgrStatus::ParseError
            }
        }
    })
}

/// Build the session graph for `sessions[session_index]` at 1-based `step`.
///
/// # Safety
/// `handle` must be a live sessions handle; `out` must be valid. The
/// returned graph is freed with [`sgr_graph_free`].
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_build(
    handle: *const SgrSessions,
    session_index: usize,
    step: usize,
    out: *mut *mut SgrGraph,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        let sessions = &(*handle).sessions;
        let Some(session) = sessions.get(session_index) else {
            set_error(&format!(
                "session index {session_index} out of range for {} sessions",
                sessions.len()
            ));
            return SgrStatus::OutOfRange;
        };
        match make_context(session, step) {
            Ok(ctx) => {
                let graph = build_graph(&ctx);
                *out = Box::into_raw(Box::new(SgrGraph { graph }));
                SgrStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                SgrStatus::OutOfRange
            }
        }
    })
}

/// # Safety
/// `handle` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_free(handle: *mut SgrGraph) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live graph handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_node_count(
    handle: *const SgrGraph,
    out: *mut usize,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        *out = (*handle).graph.nodes.len();
        SgrStatus::Ok
    })
}

/// # Safety
/// `handle` must be a live graph handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_edge_count(
    handle: *const SgrGraph,
    out: *mut usize,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        *out = (*handle).graph.edges.len();
        SgrStatus::Ok
    })
}

/// Serialize a graph to symbolic text. `budget < 0` means unlimited;
/// otherwise oldest edges are dropped until the text fits.
///
/// # Safety
/// `handle` must be a live graph handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_to_text(
    handle: *const SgrGraph,
    budget: i64,
    out: *mut *mut c_char,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        let graph = &(*handle).graph;
        let text = if budget < 0 {
            serialize_graph(graph)
        } else {
            truncate_graph_text(graph, budget as usize)
        };
        return_string(text.text, out)
    })
}

/// Parse symbolic graph text back into a graph handle.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_from_text(
    text: *const c_char,
    out: *mut *mut SgrGraph,
) -> SgrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return SgrStatus::NullArgument;
        }
        let text = match read_str(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match parse_graph(text) {
            Ok(graph) => {
                *out = Box::into_raw(Box::new(SgrGraph { graph }));
                SgrStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                SgrStatus::GrammarError
            }
        }
    })
}

/// Graph as a JSON document (nodes + edges with order keys).
///
/// # Safety
/// `handle` must be a live graph handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_to_json(
    handle: *const SgrGraph,
    out: *mut *mut c_char,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        return_string(
            serde_json::to_string(&(*handle).graph).expect("graph serialize"),
            out,
        )
    })
}

/// Graph as a DOT document for inspection.
///
/// # Safety
/// `handle` must be a live graph handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_graph_to_dot(
    handle: *const SgrGraph,
    out: *mut *mut c_char,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        return_string((*handle).graph.to_dot(), out)
    })
}

/// Rank one query's candidates with the deterministic mock scorer and return
/// TREC run lines. `budget < 0` means unlimited graph text.
///
/// # Safety
/// `handle` must be a live sessions handle; `tag` a valid string; `out`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_rank_mock(
    handle: *const SgrSessions,
    session_index: usize,
    step: usize,
    seed: u64,
    budget: i64,
    tag: *const c_char,
    out: *mut *mut c_char,
) -> SgrStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        let tag = match read_str(tag) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let sessions = &(*handle).sessions;
        let Some(session) = sessions.get(session_index) else {
            set_error("session index out of range");
            return SgrStatus::OutOfRange;
        };
        let ctx = match make_context(session, step) {
            Ok(ctx) => ctx,
            Err(e) => {
                set_error(&e.to_string());
                return SgrStatus::OutOfRange;
            }
        };
        let opts = RankOptions {
            budget: (budget >= 0).then_some(budget as usize),
            ..RankOptions::default()
        };
        match rank_candidates(&ctx, &MockScorer::new(seed), &opts) {
            Ok(list) => match emit_run_file(&[list], tag) {
                Ok(text) => return_string(text, out),
                Err(e) => {
                    set_error(&e.to_string());
                    SgrStatus::Internal
                }
            },
            Err(e) => {
                set_error(&e.to_string());
                SgrStatus::ScorerError
            }
        }
    })
}

/// Evaluate run text against qrels text; returns the JSON metric report.
/// `ks`/`ks_len` select the NDCG cutoffs.
///
/// # Safety
/// `run` and `qrels` must be valid strings; `ks` must point to `ks_len`
/// usizes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_evaluate(
    run: *const c_char,
    qrels: *const c_char,
    ks: *const usize,
    ks_len: usize,
    out: *mut *mut c_char,
) -> SgrStatus {
    guard(|| {
        if out.is_null() || (ks.is_null() && ks_len > 0) {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        let run = match read_str(run) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let qrels = match read_str(qrels) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let cutoffs: Vec<usize> = if ks_len == 0 {
            vec![1, 3, 5, 10]
        } else {
            std::slice::from_raw_parts(ks, ks_len).to_vec()
        };
        match sgr_core::eval::evaluate(run, qrels, &cutoffs) {
            Ok(report) => return_string(
                serde_json::to_string(&report).expect("report serialize"),
                out,
            ),
            Err(e) => {
                set_error(&e.to_string());
                SgrStatus::EvalError
            }
        }
    })
}

/// Binary cross entropy of a link probability against label `z` (0 or 1).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sgr_link_loss(p: f64, z: i32, out: *mut f64) -> SgrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null out pointer");
            return SgrStatus::NullArgument;
        }
        *out = loss::link_loss(p, z != 0).value;
        SgrStatus::Ok
    })
}

/// Negated sum of target-token logprobs.
///
/// # Safety
/// `logprobs` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_node_loss(
    logprobs: *const f64,
    len: usize,
    out: *mut f64,
) -> SgrStatus {
    guard(|| {
        if out.is_null() || (logprobs.is_null() && len > 0) {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        let lps = std::slice::from_raw_parts(logprobs, len);
        match loss::node_loss(&ContinuationScore::new(lps.to_vec())) {
            Ok(v) => {
                *out = v.value;
                SgrStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                SgrStatus::LossError
            }
        }
    })
}

/// Bradley-Terry negative log-sigmoid of the with/without history totals.
///
/// # Safety
/// The two arrays must be valid for their lengths; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_contrastive_loss(
    with_history: *const f64,
    with_len: usize,
    without_history: *const f64,
    without_len: usize,
    out: *mut f64,
) -> SgrStatus {
    guard(|| {
        if out.is_null()
            || (with_history.is_null() && with_len > 0)
            || (without_history.is_null() && without_len > 0)
        {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        let with = std::slice::from_raw_parts(with_history, with_len);
        let without = std::slice::from_raw_parts(without_history, without_len);
        *out = loss::contrastive_loss(
            &ContinuationScore::new(with.to_vec()),
            &ContinuationScore::new(without.to_vec()),
        )
        .value;
        SgrStatus::Ok
    })
}

/// Listwise negative log-likelihood over candidate scores.
///
/// # Safety
/// `scores` must point to `len` doubles, `positives` to `positives_len`
/// usizes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgr_rank_loss(
    scores: *const f64,
    len: usize,
    positives: *const usize,
    positives_len: usize,
    out: *mut f64,
) -> SgrStatus {
    guard(|| {
        if out.is_null()
            || (scores.is_null() && len > 0)
            || (positives.is_null() && positives_len > 0)
        {
            set_error("null argument");
            return SgrStatus::NullArgument;
        }
        let scores = std::slice::from_raw_parts(scores, len);
        let positives = std::slice::from_raw_parts(positives, positives_len);
        match loss::rank_loss(scores, positives) {
            Ok(v) => {
                *out = v.value;
                SgrStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                SgrStatus::LossError
            }
        }
    })
}
