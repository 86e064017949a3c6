//! C ABI for the engine.
//!
//! Strings crossing the boundary are NUL-terminated UTF-8. Strings returned
//! by this library must be released with [`visagent_string_free`]; episode
//! handles with [`visagent_episode_free`]. Every fallible call returns a
//! [`VisagentStatus`] and leaves a message for [`visagent_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use serde_json::json;
use visagent::backend::{ScriptFixture, ScriptedBackend};
use visagent::eval::{match_option, parse_tasks, replay_file, ReplayError, TaskFormat};
use visagent::orchestrator::{run_episode, EpisodeConfig, EpisodeResult};
use visagent::runtime::Dispatcher;
use visagent::tools::ToolRegistry;
use visagent::trace::{to_jsonl, Clock};
use visagent::transcript::parse_turn;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisagentStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    EpisodeFailed = 4,
    TraceCorrupt = 5,
    ReplayDivergence = 6,
    Panic = 7,
}

/// Outcome of a finished episode; opaque to C callers.
pub struct VisagentEpisode {
    result: EpisodeResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(VisagentStatus, String);

impl Failure {
    fn input(message: impl std::fmt::Display) -> Self {
        Failure(VisagentStatus::InvalidInput, message.to_string())
    }
}

fn set_last_error(message: &str) {
    let sanitized = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(sanitized));
}

/// Runs `body`, mapping errors and panics to status codes.
fn guarded(body: impl FnOnce() -> Result<(), Failure>) -> VisagentStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            VisagentStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            VisagentStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(VisagentStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(VisagentStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn check_out<T>(out: *mut T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(VisagentStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(text: String) -> *mut c_char {
    CString::new(text.replace('\0', "\\u0000"))
        .expect("NUL bytes replaced")
        .into_raw()
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library and valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn visagent_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn visagent_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `text` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn visagent_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// Parses one model turn into JSON: `{"ok": true, "turn": {...}}` or
/// `{"ok": false, "reason": "..."}`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visagent_parse_turn(text: *const c_char, out_json: *mut *mut c_char) -> VisagentStatus {
    guarded(|| {
        check_out(out_json, "out_json")?;
        let text = read_str(text, "text")?;
        let value = match parse_turn(text) {
            Ok(turn) => json!({"ok": true, "turn": turn}),
            Err(malformed) => json!({"ok": false, "reason": malformed.reason}),
        };
        *out_json = into_c_string(value.to_string());
        Ok(())
    })
}

/// Maps an answer onto an option index; writes -1 when nothing matches.
///
/// # Safety
/// `answer` and `options_json` (a JSON array of strings) must be
/// NUL-terminated strings; `out_index` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visagent_match_option(
    answer: *const c_char,
    options_json: *const c_char,
    out_index: *mut i32,
) -> VisagentStatus {
    guarded(|| {
        check_out(out_index, "out_index")?;
        let answer = read_str(answer, "answer")?;
        let options: Vec<String> =
            serde_json::from_str(read_str(options_json, "options_json")?).map_err(Failure::input)?;
        *out_index = match_option(answer, &options).map_or(-1, |i| i as i32);
        Ok(())
    })
}

/// Runs one episode against a scripted model and the native tool stubs.
///
/// `task_json` holds one task in the Blink row format with image paths
/// relative to `image_root`; `script_json` is an array of
/// `{"response", "expect_substring"?}` steps, also used for sub-agent calls.
/// `max_iterations` of 0 keeps the default.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_episode` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visagent_episode_run_scripted(
    task_json: *const c_char,
    script_json: *const c_char,
    image_root: *const c_char,
    workdir: *const c_char,
    max_iterations: u32,
    out_episode: *mut *mut VisagentEpisode,
) -> VisagentStatus {
    guarded(|| {
        check_out(out_episode, "out_episode")?;
        let task_json = read_str(task_json, "task_json")?;
        let script: ScriptFixture =
            serde_json::from_str(read_str(script_json, "script_json")?).map_err(Failure::input)?;
        let image_root = Path::new(read_str(image_root, "image_root")?);
        let workdir = Path::new(read_str(workdir, "workdir")?);
        let wrapped = format!("[{task_json}]");
        let mut tasks = parse_tasks(&wrapped, TaskFormat::BlinkJson, image_root).map_err(Failure::input)?;
        let task = tasks.pop().ok_or_else(|| Failure::input("no task"))?;

        let mut config = EpisodeConfig::new(workdir);
        config.clock = Clock::Logical;
        if max_iterations > 0 {
            config.max_iterations = max_iterations as usize;
        }
        let backend = Arc::new(ScriptedBackend::new(script));
        let agents = visagent::agents::BackendAgents::new(backend.clone(), config.params.clone());
        let runtime = Dispatcher::static_only(ToolRegistry::for_ablation(&config.ablation), Some(Arc::new(agents)));
        let result = run_episode(&task, backend.as_ref(), &runtime, &config)
            .map_err(|e| Failure(VisagentStatus::EpisodeFailed, e.to_string()))?;
        *out_episode = Box::into_raw(Box::new(VisagentEpisode { result }));
        Ok(())
    })
}

/// Re-runs a JSONL trace and checks that it reproduces.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_episode` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visagent_replay(
    trace_path: *const c_char,
    workdir: *const c_char,
    out_episode: *mut *mut VisagentEpisode,
) -> VisagentStatus {
    guarded(|| {
        check_out(out_episode, "out_episode")?;
        let trace_path = Path::new(read_str(trace_path, "trace_path")?);
        let workdir = Path::new(read_str(workdir, "workdir")?);
        let result = replay_file(trace_path, workdir).map_err(|e| {
            let status = match e {
                ReplayError::ReplayDivergence { .. } => VisagentStatus::ReplayDivergence,
                ReplayError::TraceCorrupt(_) => VisagentStatus::TraceCorrupt,
                ReplayError::Episode(_) => VisagentStatus::EpisodeFailed,
            };
            Failure(status, e.to_string())
        })?;
        *out_episode = Box::into_raw(Box::new(VisagentEpisode { result }));
        Ok(())
    })
}

/// # Safety
/// `episode` must be null or a live handle from this library.
unsafe fn episode_string(episode: *const VisagentEpisode, pick: impl FnOnce(&EpisodeResult) -> String) -> *mut c_char {
    match episode.as_ref() {
        Some(episode) => into_c_string(pick(&episode.result)),
        None => ptr::null_mut(),
    }
}

/// Final answer text; null for a null handle. Free with `visagent_string_free`.
///
/// # Safety
/// `episode` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn visagent_episode_answer(episode: *const VisagentEpisode) -> *mut c_char {
    episode_string(episode, |r| r.answer_text.clone())
}

/// Status name: `answered`, `max_iterations` or `backend_failure`.
///
/// # Safety
/// `episode` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn visagent_episode_status(episode: *const VisagentEpisode) -> *mut c_char {
    episode_string(episode, |r| r.status.as_str().to_string())
}

/// Trace as JSONL, one event per line.
///
/// # Safety
/// `episode` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn visagent_episode_trace_jsonl(episode: *const VisagentEpisode) -> *mut c_char {
    episode_string(episode, |r| to_jsonl(&r.trace))
}

/// Number of iterations the episode used; 0 for a null handle.
///
/// # Safety
/// `episode` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn visagent_episode_iterations(episode: *const VisagentEpisode) -> u32 {
    episode.as_ref().map_or(0, |e| e.result.t() as u32)
}

/// Releases an episode handle. Null is ignored.
///
/// # Safety
/// `episode` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn visagent_episode_free(episode: *mut VisagentEpisode) {
    if !episode.is_null() {
        drop(Box::from_raw(episode));
    }
}
