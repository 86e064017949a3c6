mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use common::*;
use serde_json::{json, Value};
use visagent::backend::{
    BackendError, CompletionParams, ContentPart, Message, OpenAiCompatibleBackend, RetryPolicy, VisionLanguageModel,
};
use visagent::images::ImageRef;
use visagent::orchestrator::{run_episode, EpisodeStatus};

fn reply(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn scene() -> std::path::PathBuf {
    episode_dir("depth").join("scene.jpg")
}

#[test]
fn request_follows_the_chat_completions_shape() {
    let server = FakeServer::start(|_| (200, reply("Final Answer: (B)")));
    let backend = OpenAiCompatibleBackend::new(&server.base).with_api_key(Some("sk-test".into()));
    let messages = vec![Message::user(vec![
        ContentPart::text("Which is closer?"),
        ContentPart::image(ImageRef::task_input("img-0", scene())),
    ])];
    let answer = backend.complete(&messages, &CompletionParams::default()).unwrap();
    assert_eq!(answer, "Final Answer: (B)");

    let received = server.received();
    assert_eq!(received.len(), 1);
    assert_eq!(received[0].url, "/chat/completions");
    assert!(received[0]
        .headers
        .contains(&("authorization".into(), "Bearer sk-test".into())));
    let body: Value = serde_json::from_str(&received[0].body).unwrap();
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 2048);
    assert_eq!(body["messages"][0]["role"], "user");
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(content[0], json!({"type": "text", "text": "Which is closer?"}));
    let url = content[1]["image_url"]["url"].as_str().unwrap();
    let encoded = url.strip_prefix("data:image/jpeg;base64,").unwrap();
    let decoded = base64::engine::general_purpose::STANDARD.decode(encoded).unwrap();
    assert_eq!(decoded, std::fs::read(scene()).unwrap());
}

#[test]
fn server_errors_are_retried_with_identical_bytes() {
    let count = Arc::new(AtomicUsize::new(0));
    let seen = count.clone();
    let server = FakeServer::start(move |_| match seen.fetch_add(1, Ordering::SeqCst) {
        0 => (503, "busy".into()),
        _ => (200, reply("ok")),
    });
    let backend = OpenAiCompatibleBackend::new(&server.base).with_retry(RetryPolicy {
        delays: vec![Duration::ZERO],
    });
    let messages = vec![Message::user(vec![ContentPart::text("hi")])];
    assert_eq!(backend.complete(&messages, &CompletionParams::default()).unwrap(), "ok");
    let received = server.received();
    assert_eq!(received.len(), 2);
    assert_eq!(received[0].body, received[1].body);
}

#[test]
fn client_errors_are_not_retried() {
    let server = FakeServer::start(|_| (401, r#"{"error": "bad key"}"#.into()));
    let backend = OpenAiCompatibleBackend::new(&server.base).with_retry(RetryPolicy {
        delays: vec![Duration::ZERO; 3],
    });
    let messages = vec![Message::user(vec![ContentPart::text("hi")])];
    let err = backend.complete(&messages, &CompletionParams::default()).unwrap_err();
    assert!(matches!(err, BackendError::Rejected(_)));
    assert!(!err.is_retryable());
    assert_eq!(server.received().len(), 1);
}

#[test]
fn episode_over_http() {
    let server = FakeServer::start(|_| (200, reply("Thought: A is lower in the frame.\nFinal Answer: (A)")));
    let backend = OpenAiCompatibleBackend::new(&server.base).with_retry(RetryPolicy::none());
    let (task, _) = load_episode("depth");
    let dir = tempfile::tempdir().unwrap();
    let config = config(dir.path());
    let runtime = dispatcher(
        &Arc::new(visagent::backend::ScriptedBackend::from_responses(Vec::<String>::new())),
        &config,
    );
    let result = run_episode(&task, &backend, &runtime, &config).unwrap();
    assert_eq!(result.status, EpisodeStatus::Answered);
    assert_eq!(result.answer_text, "(A)");
    let body: Value = serde_json::from_str(&server.received()[0].body).unwrap();
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(content.len(), 2);
    assert!(content[0]["text"].as_str().unwrap().contains("Image: scene.jpg"));
}
