#![allow(dead_code)]

pub mod grammar;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use visagent::agents::BackendAgents;
use visagent::backend::{CompletionParams, FixtureFile, ScriptFixture, ScriptedBackend};
use visagent::eval::{load_tasks, TaskFormat, TaskInstance};
use visagent::orchestrator::{run_episode, EpisodeConfig, EpisodeResult};
use visagent::runtime::Dispatcher;
use visagent::tools::ToolRegistry;
use visagent::trace::Clock;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn episode_dir(name: &str) -> PathBuf {
    fixtures().join("episodes").join(name)
}

/// The single task and its script from an episode fixture directory.
pub fn load_episode(name: &str) -> (TaskInstance, ScriptFixture) {
    let dir = episode_dir(name);
    let mut tasks = load_tasks(&dir.join("task.json"), TaskFormat::BlinkJson, &dir).unwrap();
    assert_eq!(tasks.len(), 1);
    let script = FixtureFile::load(&dir.join("script.json"))
        .unwrap()
        .for_task(&tasks[0].id)
        .unwrap();
    (tasks.remove(0), script)
}

pub fn config(workdir: &Path) -> EpisodeConfig {
    let mut config = EpisodeConfig::new(workdir);
    config.clock = Clock::Logical;
    config.retry_backoff = Duration::ZERO;
    config
}

/// Static dispatcher whose sub-agents answer from the same scripted backend.
pub fn dispatcher(backend: &Arc<ScriptedBackend>, config: &EpisodeConfig) -> Dispatcher {
    let agents = BackendAgents::new(backend.clone(), CompletionParams::default());
    Dispatcher::static_only(ToolRegistry::for_ablation(&config.ablation), Some(Arc::new(agents)))
}

pub fn run_scripted(
    task: &TaskInstance,
    script: ScriptFixture,
    config: &EpisodeConfig,
) -> (EpisodeResult, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::new(script));
    let runtime = dispatcher(&backend, config);
    let result = run_episode(task, backend.as_ref(), &runtime, config).unwrap();
    (result, backend)
}

pub fn run_fixture(name: &str, workdir: &Path) -> (EpisodeResult, Arc<ScriptedBackend>) {
    let (task, script) = load_episode(name);
    run_scripted(&task, script, &config(workdir))
}

/// Code blocks dispatched during an episode, in order.
pub fn dispatched_code(result: &EpisodeResult) -> Vec<String> {
    result
        .trace
        .iter()
        .filter(|e| e.phase == visagent::trace::Phase::Dispatch)
        .map(|e| e.payload["code"].as_str().unwrap().to_string())
        .collect()
}

/// A request received by [`FakeServer`].
#[derive(Debug, Clone)]
pub struct Received {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

/// Local HTTP server answering every request with `respond(&received)`.
pub struct FakeServer {
    pub base: String,
    server: Arc<tiny_http::Server>,
    received: Arc<std::sync::Mutex<Vec<Received>>>,
    worker: Option<std::thread::JoinHandle<()>>,
}

impl FakeServer {
    pub fn start<F>(respond: F) -> Self
    where
        F: Fn(&Received) -> (u16, String) + Send + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let received = Arc::new(std::sync::Mutex::new(Vec::new()));
        let worker = {
            let server = server.clone();
            let received = received.clone();
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let mut body = String::new();
                    std::io::Read::read_to_string(request.as_reader(), &mut body).unwrap();
                    let seen = Received {
                        method: request.method().to_string(),
                        url: request.url().to_string(),
                        headers: request
                            .headers()
                            .iter()
                            .map(|h| (h.field.to_string().to_lowercase(), h.value.to_string()))
                            .collect(),
                        body,
                    };
                    let (status, text) = respond(&seen);
                    received.lock().unwrap().push(seen);
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = request.respond(
                        tiny_http::Response::from_string(text)
                            .with_status_code(status)
                            .with_header(header),
                    );
                }
            })
        };
        Self {
            base: format!("http://127.0.0.1:{port}"),
            server,
            received,
            worker: Some(worker),
        }
    }

    pub fn received(&self) -> Vec<Received> {
        self.received.lock().unwrap().clone()
    }
}

impl Drop for FakeServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

/// Recursively copies `from` into a new directory `to`.
pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}
