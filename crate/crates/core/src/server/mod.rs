//! Local HTTP service for one agent session: REST endpoints plus a single
//! server-sent event channel.
//!
//! | method | path            | result |
//! |--------|-----------------|--------|
//! | GET    | /api/health     | `{"status":"ok"}` |
//! | GET    | /api/context    | persisted conversation JSON |
//! | POST   | /api/message    | `{text}`; 202, 400 empty, 409 busy |
//! | GET    | /api/events     | SSE stream |
//! | POST   | /api/approval   | `{request_id, allow, note?}`; 404 unknown |
//! | POST   | /api/interrupt  | 202 |
//! | POST   | /api/undo       | `{"length": n}`; 409 busy or nothing to undo |
//! | GET    | /api/export     | `?from&to`, LaTeX fragment; 400 bad range |
//! | GET    | /api/cost       | `{"cost_total": x}` |
//!
//! Events: `text_delta{chunk}`, `tool_call{id,name,args}`,
//! `tool_result{id,status,content}`, `approval_request{request_id,tool,args,tier}`,
//! `usage{cost_total}` and `done{status[,message]}`.

mod static_files;

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, StatusCode};

use crate::agent::{result_status, Agent, AgentEvent, InterruptFlag};
use crate::hooks::{ApprovalRequest, ApprovalResponder, ApprovalVerdict, UserApprovalHook};
use crate::latex::export_conversation;
use crate::model::Context;

const KEEPALIVE: Duration = Duration::from_secs(15);
const MAX_BODY: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Ask the browser before running calls the tier table marks APPROVE.
    pub approvals: bool,
    /// How long an approval may stay unanswered; `None` waits forever.
    pub approval_timeout: Option<Duration>,
    /// Serve this directory instead of the bundled page.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            approvals: true,
            approval_timeout: None,
            ui_dir: None,
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Event fan-out and the approval waiting room.
#[derive(Default)]
struct Bus {
    subscribers: Mutex<Vec<mpsc::Sender<String>>>,
    pending: Mutex<HashMap<String, mpsc::Sender<ApprovalVerdict>>>,
    next_request: AtomicU64,
    cost_total: Mutex<f64>,
}

impl Bus {
    fn publish(&self, event: &str, data: Value) {
        let frame = format!("event: {event}\ndata: {data}\n\n");
        lock(&self.subscribers).retain(|tx| tx.send(frame.clone()).is_ok());
    }

    fn subscribe(&self) -> mpsc::Receiver<String> {
        let (tx, rx) = mpsc::channel();
        lock(&self.subscribers).push(tx);
        rx
    }

    /// Dropping the senders wakes every waiter with "no answer".
    fn expire_approvals(&self) {
        lock(&self.pending).clear();
    }
}

struct WebApprover {
    bus: Arc<Bus>,
    timeout: Option<Duration>,
}

impl ApprovalResponder for WebApprover {
    fn decide(&mut self, request: &ApprovalRequest) -> Option<ApprovalVerdict> {
        let id = format!("approval-{}", self.bus.next_request.fetch_add(1, Ordering::SeqCst) + 1);
        let (tx, rx) = mpsc::channel();
        lock(&self.bus.pending).insert(id.clone(), tx);
        self.bus.publish(
            "approval_request",
            json!({
                "request_id": id,
                "tool": request.tool_name,
                "args": request.arguments,
                "tier": request.tier,
            }),
        );
        let verdict = match self.timeout {
            Some(t) => rx.recv_timeout(t).ok(),
            None => rx.recv().ok(),
        };
        lock(&self.bus.pending).remove(&id);
        verdict
    }
}

struct Session {
    agent: Mutex<Agent>,
    busy: AtomicBool,
    /// Conversation as of the last idle moment.
    snapshot: Mutex<Context>,
    interrupt: InterruptFlag,
    bus: Arc<Bus>,
    ui_dir: Option<PathBuf>,
}

impl Session {
    fn acquire(&self) -> bool {
        self.busy
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }

    fn release(&self) {
        self.busy.store(false, Ordering::SeqCst);
    }
}

pub struct UiServer {
    http: Arc<tiny_http::Server>,
    addr: SocketAddr,
    session: Arc<Session>,
    accept: Option<JoinHandle<()>>,
}

impl UiServer {
    /// Binds `bind` and serves `agent` on a background thread. Streaming is
    /// switched on; an approval hook is appended when `options.approvals`.
    pub fn start(agent: Agent, bind: &str, options: ServerOptions) -> io::Result<UiServer> {
        let http = tiny_http::Server::http(bind).map_err(io::Error::other)?;
        let addr = http
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("not an IP listener"))?;
        let bus = Arc::new(Bus::default());
        let mut agent = agent.streaming(true);
        if options.approvals {
            agent = agent.with_pre_hook(Box::new(UserApprovalHook::new(Box::new(WebApprover {
                bus: bus.clone(),
                timeout: options.approval_timeout,
            }))));
        }
        let observer_bus = bus.clone();
        agent = agent.with_observer(move |ev| forward(&observer_bus, ev));
        *lock(&bus.cost_total) = agent.context().total_cost();
        let session = Arc::new(Session {
            snapshot: Mutex::new(agent.context().clone()),
            interrupt: agent.interrupt_flag(),
            agent: Mutex::new(agent),
            busy: AtomicBool::new(false),
            bus,
            ui_dir: options.ui_dir,
        });
        let http = Arc::new(http);
        let accept = {
            let http = http.clone();
            let session = session.clone();
            thread::spawn(move || {
                for request in http.incoming_requests() {
                    let session = session.clone();
                    thread::spawn(move || handle(&session, request));
                }
            })
        };
        Ok(UiServer {
            http,
            addr,
            session,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_busy(&self) -> bool {
        self.session.busy.load(Ordering::SeqCst)
    }

    /// Blocks until the listener stops.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.http.unblock();
        self.session.interrupt.set();
        self.session.bus.expire_approvals();
        lock(&self.session.bus.subscribers).clear();
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for UiServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop();
        }
    }
}

fn forward(bus: &Bus, event: &AgentEvent) {
    match event {
        AgentEvent::TextDelta(chunk) => bus.publish("text_delta", json!({ "chunk": chunk })),
        AgentEvent::ToolCall(c) => bus.publish("tool_call", json!({ "id": c.id, "name": c.name, "args": c.arguments })),
        AgentEvent::ToolResult(m) => bus.publish(
            "tool_result",
            json!({
                "id": m.tool_call_id,
                "status": result_status(m).unwrap_or("success"),
                "content": m.text,
            }),
        ),
        AgentEvent::Usage { total_cost, .. } => *lock(&bus.cost_total) = *total_cost,
        AgentEvent::Done(_) => {}
    }
}

fn run_in_background(session: Arc<Session>, text: String) {
    thread::spawn(move || {
        let mut agent = lock(&session.agent);
        let result = agent.run(&text);
        session.interrupt.clear();
        let context = agent.context().clone();
        let cost_total = context.total_cost();
        *lock(&session.snapshot) = context;
        *lock(&session.bus.cost_total) = cost_total;
        session.bus.expire_approvals();
        let done = match result {
            Ok(r) => json!({ "status": r.status }),
            Err(e) => json!({ "status": "error", "message": e.to_string() }),
        };
        session.release();
        session.bus.publish("usage", json!({ "cost_total": cost_total }));
        session.bus.publish("done", done);
        drop(agent);
    });
}

fn json_response(status: u16, body: Value) -> Response<io::Cursor<Vec<u8>>> {
    Response::from_data(body.to_string().into_bytes())
        .with_status_code(StatusCode(status))
        .with_header(header("Content-Type", "application/json"))
}

fn error_response(status: u16, message: &str) -> Response<io::Cursor<Vec<u8>>> {
    json_response(status, json!({ "error": message }))
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("valid header")
}

fn read_json(request: &mut Request) -> Result<Value, String> {
    let mut body = String::new();
    request
        .as_reader()
        .take(MAX_BODY)
        .read_to_string(&mut body)
        .map_err(|e| format!("cannot read body: {e}"))?;
    serde_json::from_str(&body).map_err(|e| format!("body is not JSON: {e}"))
}

fn handle(session: &Arc<Session>, mut request: Request) {
    let url = request.url().to_string();
    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
    let method = request.method().clone();
    let response = match (&method, path) {
        (Method::Get, "/api/events") => return stream_events(session, request),
        (Method::Get, "/api/health") => json_response(200, json!({ "status": "ok" })),
        (Method::Get, "/api/context") => Response::from_data(lock(&session.snapshot).to_json())
            .with_header(header("Content-Type", "application/json")),
        (Method::Get, "/api/cost") => json_response(200, json!({ "cost_total": *lock(&session.bus.cost_total) })),
        (Method::Get, "/api/export") => export(session, query),
        (Method::Post, "/api/message") => message(session, &mut request),
        (Method::Post, "/api/approval") => approval(session, &mut request),
        (Method::Post, "/api/interrupt") => {
            if session.busy.load(Ordering::SeqCst) {
                session.interrupt.set();
                session.bus.expire_approvals();
            }
            json_response(202, json!({ "status": "interrupting" }))
        }
        (Method::Post, "/api/undo") => undo(session),
        (_, p) if p.starts_with("/api/") => error_response(404, "no such endpoint"),
        (Method::Get, p) => static_files::serve(session.ui_dir.as_deref(), p),
        _ => error_response(405, "method not allowed"),
    };
    let _ = request.respond(response);
}

fn message(session: &Arc<Session>, request: &mut Request) -> Response<io::Cursor<Vec<u8>>> {
    let body = match read_json(request) {
        Ok(b) => b,
        Err(e) => return error_response(400, &e),
    };
    let text = body.get("text").and_then(Value::as_str).unwrap_or_default().to_string();
    if text.trim().is_empty() {
        return error_response(400, "text must not be empty");
    }
    if !session.acquire() {
        return error_response(409, "a run is already in progress");
    }
    run_in_background(session.clone(), text);
    json_response(202, json!({ "status": "started" }))
}

fn approval(session: &Session, request: &mut Request) -> Response<io::Cursor<Vec<u8>>> {
    let body = match read_json(request) {
        Ok(b) => b,
        Err(e) => return error_response(400, &e),
    };
    let (Some(id), Some(allow)) = (
        body.get("request_id").and_then(Value::as_str),
        body.get("allow").and_then(Value::as_bool),
    ) else {
        return error_response(400, "request_id and allow are required");
    };
    let note = body.get("note").and_then(Value::as_str).map(str::to_string);
    let waiter = lock(&session.bus.pending).remove(id);
    match waiter {
        Some(tx) if tx.send(ApprovalVerdict { allow, note }).is_ok() => json_response(200, json!({ "status": "ok" })),
        _ => error_response(404, "unknown or expired approval request"),
    }
}

fn undo(session: &Session) -> Response<io::Cursor<Vec<u8>>> {
    if !session.acquire() {
        return error_response(409, "a run is in progress");
    }
    let response = {
        let mut agent = lock(&session.agent);
        match agent.context_mut().undo() {
            Ok(()) => {
                let context = agent.context().clone();
                let length = context.len();
                *lock(&session.bus.cost_total) = context.total_cost();
                *lock(&session.snapshot) = context;
                json_response(200, json!({ "length": length }))
            }
            Err(e) => error_response(409, &e.to_string()),
        }
    };
    session.release();
    response
}

fn export(session: &Session, query: &str) -> Response<io::Cursor<Vec<u8>>> {
    let context = lock(&session.snapshot).clone();
    let mut from = 0;
    let mut to = context.len();
    for (k, v) in url::form_urlencoded::parse(query.as_bytes()) {
        let slot = match k.as_ref() {
            "from" => &mut from,
            "to" => &mut to,
            _ => continue,
        };
        match v.parse() {
            Ok(n) => *slot = n,
            Err(_) => return error_response(400, &format!("{k} must be a message index")),
        }
    }
    match export_conversation(&context, Some(from..to)) {
        Ok(tex) => {
            Response::from_data(tex.into_bytes()).with_header(header("Content-Type", "text/x-tex; charset=utf-8"))
        }
        Err(e) => error_response(400, &e.to_string()),
    }
}

fn stream_events(session: &Session, request: Request) {
    let rx = session.bus.subscribe();
    let mut out = request.into_writer();
    let head = "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nCache-Control: no-cache\r\nConnection: close\r\n\r\n: connected\n\n";
    if out.write_all(head.as_bytes()).and_then(|_| out.flush()).is_err() {
        return;
    }
    loop {
        let frame = match rx.recv_timeout(KEEPALIVE) {
            Ok(f) => f,
            Err(RecvTimeoutError::Timeout) => ": keep-alive\n\n".to_string(),
            Err(RecvTimeoutError::Disconnected) => return,
        };
        if out.write_all(frame.as_bytes()).and_then(|_| out.flush()).is_err() {
            return;
        }
    }
}
