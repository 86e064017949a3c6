use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use serde_json::Value;
use visagent_ffi::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn c(text: &str) -> CString {
    CString::new(text).unwrap()
}

unsafe fn take(text: *mut c_char) -> String {
    assert!(!text.is_null());
    let owned = CStr::from_ptr(text).to_str().unwrap().to_string();
    visagent_string_free(text);
    owned
}

unsafe fn last_error() -> String {
    let message = visagent_last_error();
    assert!(!message.is_null());
    CStr::from_ptr(message).to_string_lossy().into_owned()
}

fn depth_inputs() -> (String, String, PathBuf) {
    let dir = fixtures().join("episodes/depth");
    let tasks: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("task.json")).unwrap()).unwrap();
    let script = std::fs::read_to_string(dir.join("script.json")).unwrap();
    (tasks[0].to_string(), script, dir)
}

unsafe fn run_depth(workdir: &Path, max_iterations: u32) -> (VisagentStatus, *mut VisagentEpisode) {
    let (task, script, root) = depth_inputs();
    let mut episode = ptr::null_mut();
    let status = visagent_episode_run_scripted(
        c(&task).as_ptr(),
        c(&script).as_ptr(),
        c(root.to_str().unwrap()).as_ptr(),
        c(workdir.to_str().unwrap()).as_ptr(),
        max_iterations,
        &mut episode,
    );
    (status, episode)
}

#[test]
fn parse_turn_reports_sections_or_reason() {
    unsafe {
        let mut out = ptr::null_mut();
        let text = c("Thought: look.\nFinal Answer: (B)");
        assert_eq!(visagent_parse_turn(text.as_ptr(), &mut out), VisagentStatus::Ok);
        let value: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(value["ok"], true);
        assert_eq!(value["turn"]["terminal"], true);
        assert_eq!(value["turn"]["sections"].as_array().unwrap().len(), 2);

        let text = c("no labels here");
        assert_eq!(visagent_parse_turn(text.as_ptr(), &mut out), VisagentStatus::Ok);
        let value: Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(value["ok"], false);
        assert_eq!(value["reason"], "no_recognized_label");
    }
}

#[test]
fn match_option_and_argument_errors() {
    unsafe {
        let mut index = 99;
        let options = c(r#"["near", "far"]"#);
        assert_eq!(
            visagent_match_option(c("Final Answer: (B)").as_ptr(), options.as_ptr(), &mut index),
            VisagentStatus::Ok
        );
        assert_eq!(index, 1);
        assert_eq!(
            visagent_match_option(c("(A) or (B)").as_ptr(), options.as_ptr(), &mut index),
            VisagentStatus::Ok
        );
        assert_eq!(index, -1);

        assert_eq!(
            visagent_match_option(ptr::null(), options.as_ptr(), &mut index),
            VisagentStatus::NullArgument
        );
        assert!(last_error().contains("answer"));
        assert_eq!(
            visagent_match_option(c("A").as_ptr(), c("not json").as_ptr(), &mut index),
            VisagentStatus::InvalidInput
        );
        let bad_utf8 = [0xffu8 as c_char, 0];
        assert_eq!(
            visagent_match_option(bad_utf8.as_ptr(), options.as_ptr(), &mut index),
            VisagentStatus::InvalidUtf8
        );
        assert_eq!(
            visagent_match_option(c("A").as_ptr(), options.as_ptr(), ptr::null_mut()),
            VisagentStatus::NullArgument
        );
    }
}

#[test]
fn scripted_episode_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let (status, episode) = run_depth(&dir.path().join("work"), 0);
        assert_eq!(status, VisagentStatus::Ok);
        assert_eq!(take(visagent_episode_answer(episode)), "(A)");
        assert_eq!(take(visagent_episode_status(episode)), "answered");
        assert_eq!(visagent_episode_iterations(episode), 3);
        let trace = take(visagent_episode_trace_jsonl(episode));
        visagent_episode_free(episode);

        let path = dir.path().join("trace.jsonl");
        std::fs::write(&path, &trace).unwrap();
        let mut replayed = ptr::null_mut();
        let status = visagent_replay(
            c(path.to_str().unwrap()).as_ptr(),
            c(dir.path().join("replay").to_str().unwrap()).as_ptr(),
            &mut replayed,
        );
        assert_eq!(status, VisagentStatus::Ok);
        assert_eq!(take(visagent_episode_trace_jsonl(replayed)), trace);
        visagent_episode_free(replayed);

        std::fs::write(&path, &trace[..trace.len() / 3]).unwrap();
        let status = visagent_replay(
            c(path.to_str().unwrap()).as_ptr(),
            c(dir.path().join("replay2").to_str().unwrap()).as_ptr(),
            &mut replayed,
        );
        assert_eq!(status, VisagentStatus::TraceCorrupt);
        assert!(last_error().contains("corrupt"));
    }
}

#[test]
fn iteration_limit_and_null_handles() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let (status, episode) = run_depth(dir.path(), 1);
        assert_eq!(status, VisagentStatus::Ok);
        assert_eq!(take(visagent_episode_status(episode)), "max_iterations");
        visagent_episode_free(episode);

        assert!(visagent_episode_answer(ptr::null()).is_null());
        assert_eq!(visagent_episode_iterations(ptr::null()), 0);
        visagent_episode_free(ptr::null_mut());
        visagent_string_free(ptr::null_mut());
        let version = CStr::from_ptr(visagent_version()).to_str().unwrap();
        assert_eq!(version, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/visagent.h")).unwrap();
    for name in [
        "visagent_last_error",
        "visagent_version",
        "visagent_string_free",
        "visagent_parse_turn",
        "visagent_match_option",
        "visagent_episode_run_scripted",
        "visagent_replay",
        "visagent_episode_answer",
        "visagent_episode_status",
        "visagent_episode_trace_jsonl",
        "visagent_episode_iterations",
        "visagent_episode_free",
        "typedef struct VisagentEpisode VisagentEpisode;",
        "VISAGENT_STATUS_REPLAY_DIVERGENCE = 6",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
