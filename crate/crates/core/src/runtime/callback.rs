//! Loopback HTTP server that answers sub-agent callbacks from an executor.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::json;

use crate::agents::{handle_agent_callback, AgentError, AgentHandler, CallbackPayload};

type Routes = Arc<Mutex<HashMap<String, PathBuf>>>;

pub struct CallbackServer {
    server: Arc<tiny_http::Server>,
    port: u16,
    routes: Routes,
    next_token: AtomicU64,
    worker: Option<JoinHandle<()>>,
}

/// Registration of one workdir; unregistered on drop.
pub struct CallbackRoute<'a> {
    server: &'a CallbackServer,
    token: String,
    pub url: String,
}

impl Drop for CallbackRoute<'_> {
    fn drop(&mut self) {
        self.server.routes.lock().expect("routes lock").remove(&self.token);
    }
}

impl CallbackServer {
    /// Binds `127.0.0.1` on an ephemeral port.
    pub fn start(handler: Arc<dyn AgentHandler>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("callback server has no IP address"))?;
        let server = Arc::new(server);
        let routes: Routes = Arc::default();
        let worker = {
            let server = Arc::clone(&server);
            let routes = Arc::clone(&routes);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    let routes = Arc::clone(&routes);
                    let handler = Arc::clone(&handler);
                    std::thread::spawn(move || serve(request, &routes, handler.as_ref()));
                }
            })
        };
        Ok(Self {
            server,
            port,
            routes,
            next_token: AtomicU64::new(0),
            worker: Some(worker),
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn register(&self, workdir: &Path) -> CallbackRoute<'_> {
        let n = self.next_token.fetch_add(1, Ordering::Relaxed);
        let token = format!("{:x}-{n}", std::process::id());
        self.routes
            .lock()
            .expect("routes lock")
            .insert(token.clone(), workdir.to_path_buf());
        CallbackRoute {
            server: self,
            url: format!("http://127.0.0.1:{}/callback/{token}", self.port),
            token,
        }
    }
}

impl Drop for CallbackServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn serve(mut request: tiny_http::Request, routes: &Routes, handler: &dyn AgentHandler) {
    let (status, body) = route(&mut request, routes, handler);
    let response = tiny_http::Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(
            "Content-Type: application/json"
                .parse::<tiny_http::Header>()
                .expect("static header"),
        );
    if let Err(e) = request.respond(response) {
        tracing::warn!(error = %e, "failed to answer callback");
    }
}

fn route(request: &mut tiny_http::Request, routes: &Routes, handler: &dyn AgentHandler) -> (u16, serde_json::Value) {
    let error = |status: u16, message: String| (status, json!({ "error": message }));
    if *request.method() != tiny_http::Method::Post {
        return error(405, "only POST is supported".into());
    }
    let Some(token) = request.url().strip_prefix("/callback/") else {
        return error(404, format!("no route for {}", request.url()));
    };
    let Some(workdir) = routes.lock().expect("routes lock").get(token).cloned() else {
        return error(404, format!("unknown callback token {token:?}"));
    };
    let mut body = String::new();
    if let Err(e) = request.as_reader().read_to_string(&mut body) {
        return error(400, e.to_string());
    }
    let payload: CallbackPayload = match serde_json::from_str(&body) {
        Ok(p) => p,
        Err(e) => return error(400, format!("bad callback body: {e}")),
    };
    match handle_agent_callback(&payload, &workdir, handler) {
        Ok(text) => (200, json!({ "text": text })),
        Err(e @ AgentError::UnknownAgent(_)) => error(404, e.to_string()),
        Err(e @ AgentError::Backend(_)) => error(502, e.to_string()),
        Err(e) => error(400, e.to_string()),
    }
}
