mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use serde_json::{json, Value};
use visagent::agents::{AgentError, AgentHandler, AgentRequest, BackendAgents};
use visagent::backend::{BackendError, CompletionParams, ScriptedBackend};
use visagent::orchestrator::run_episode;
use visagent::runtime::{
    CallbackServer, Dispatcher, ExecuteRequest, ExecutionMode, ExecutorClient, ExecutorError, ToolRuntime,
};
use visagent::tools::ToolRegistry;
use visagent::trace::to_jsonl;
use visagent::transcript::CodeBlock;

fn request(timeout_s: f64) -> ExecuteRequest {
    ExecuteRequest {
        code: "print(1)\n".into(),
        workdir: "/tmp/work".into(),
        callback_url: None,
        timeout_s,
    }
}

fn post(url: &str, body: &str) -> (u16, Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut response = agent.post(url).send(body).unwrap();
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap())
}

#[test]
fn wire_request_and_defaulted_response() {
    let server = FakeServer::start(|_| (200, r#"{"stdout": "1\n"}"#.into()));
    let response = ExecutorClient::new(format!("{}/", server.base))
        .execute(&request(3.0))
        .unwrap();
    assert_eq!(response.stdout, "1\n");
    assert_eq!(response.stderr, "");
    assert!(response.new_images.is_empty());
    assert_eq!(response.error, None);

    let received = server.received();
    assert_eq!(received[0].url, "/execute");
    let body: Value = serde_json::from_str(&received[0].body).unwrap();
    assert_eq!(
        body,
        json!({"code": "print(1)\n", "workdir": "/tmp/work", "callback_url": null, "timeout_s": 3.0})
    );
}

#[test]
fn non_success_status_and_bad_json_are_unreachable() {
    let server = FakeServer::start(|_| (500, "boom".into()));
    let err = ExecutorClient::new(&server.base).execute(&request(1.0)).unwrap_err();
    assert!(err.to_string().starts_with("ExecutorUnreachable"), "{err}");
    assert!(err.to_string().contains("500"));

    let server = FakeServer::start(|_| (200, "not json".into()));
    let err = ExecutorClient::new(&server.base).execute(&request(1.0)).unwrap_err();
    assert!(matches!(err, ExecutorError::BadResponse(_)));
    assert!(err.to_string().starts_with("ExecutorUnreachable"));
}

#[test]
fn slow_executor_times_out() {
    let server = FakeServer::start(|_| {
        std::thread::sleep(Duration::from_millis(1500));
        (200, "{}".into())
    });
    let client = ExecutorClient::new(&server.base).with_transport_grace(Duration::from_millis(100));
    let err = client.execute(&request(0.2)).unwrap_err();
    assert!(matches!(err, ExecutorError::TimeoutExceeded(_)), "{err}");
    assert!(err.to_string().starts_with("TimeoutExceeded"));
}

#[test]
fn escaping_images_are_dropped_with_a_note() {
    let server = FakeServer::start(|_| {
        (
            200,
            json!({"stdout": "SAVED_IMAGE: out.png\nSAVED_IMAGE: ../../etc/evil.png\n", "new_images": ["out.png", "/etc/passwd"]})
                .to_string(),
        )
    });
    let dir = tempfile::tempdir().unwrap();
    let dispatcher = Dispatcher::with_executor(
        ToolRegistry::builtin(),
        ExecutionMode::Delegated,
        ExecutorClient::new(&server.base),
        None,
    )
    .unwrap();
    let result = dispatcher.execute(&CodeBlock::python("segment_image('x.png')"), dir.path());
    assert_eq!(result.new_images, vec![dir.path().join("out.png")]);
    assert_eq!(result.stderr.lines().count(), 2);
    assert!(result.stderr.contains("evil.png"));
}

struct Failing;

impl AgentHandler for Failing {
    fn handle(&self, _: &AgentRequest) -> Result<String, AgentError> {
        Err(BackendError::Rejected("quota".into()).into())
    }
}

#[test]
fn callback_statuses() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.jpg"), b"x").unwrap();
    let server = CallbackServer::start(Arc::new(Failing)).unwrap();
    let route = server.register(dir.path());

    let (status, _) = post(&route.url, "{not json");
    assert_eq!(status, 400);
    let (status, _) = post(
        &route.url,
        r#"{"agent": "image_captioning", "args": {"image_path": "missing.jpg"}}"#,
    );
    assert_eq!(status, 400);
    let (status, _) = post(
        &route.url,
        r#"{"agent": "image_captioning", "args": {"image": "a.jpg"}}"#,
    );
    assert_eq!(status, 400);
    let (status, body) = post(
        &route.url,
        r#"{"agent": "image_captioning", "args": {"image_path": "a.jpg"}}"#,
    );
    assert_eq!(status, 502);
    assert!(body["error"].as_str().unwrap().contains("quota"));
    let (status, _) = post(&format!("http://127.0.0.1:{}/elsewhere", server.port()), "{}");
    assert_eq!(status, 404);
}

/// Stands in for the sidecar: answers `visual_prompt_describe` through the callback.
fn sidecar() -> FakeServer {
    FakeServer::start(|received| {
        let body: Value = serde_json::from_str(&received.body).unwrap();
        let code = body["code"].as_str().unwrap();
        assert!(code.starts_with("visual_prompt_describe("), "{code}");
        let callback = body["callback_url"].as_str().unwrap();
        let (status, reply) = post(
            callback,
            &json!({"agent": "visual_prompt_describe", "args": {"image_path": "scene.jpg"}}).to_string(),
        );
        assert_eq!(status, 200);
        let stdout = format!("{}\n", reply["text"].as_str().unwrap());
        (
            200,
            json!({"stdout": stdout, "stderr": "", "new_images": [], "error": null}).to_string(),
        )
    })
}

#[test]
fn delegated_episode_matches_static_trace() {
    let (task, script) = load_episode("visual_prompt");
    let static_dir = tempfile::tempdir().unwrap();
    let (expected, _) = run_fixture("visual_prompt", static_dir.path());

    let executor = sidecar();
    let dir = tempfile::tempdir().unwrap();
    let config = config(dir.path());
    let backend = Arc::new(ScriptedBackend::new(script));
    let agents = BackendAgents::new(backend.clone(), CompletionParams::default());
    let runtime = Dispatcher::with_executor(
        ToolRegistry::builtin(),
        ExecutionMode::Delegated,
        ExecutorClient::new(&executor.base),
        Some(Arc::new(agents)),
    )
    .unwrap();
    let result = run_episode(&task, backend.as_ref(), &runtime, &config).unwrap();

    assert_eq!(result.answer_text, "(A)");
    assert_eq!(executor.received().len(), 1);
    assert_eq!(backend.calls(), 3);
    assert_eq!(backend.requests()[1].image_count(), 1);
    assert_eq!(to_jsonl(&result.trace), to_jsonl(&expected.trace));
}
