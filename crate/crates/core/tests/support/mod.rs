//! Generators and independent oracles shared by the integration tests.

#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Component, Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};

use ensemble::model::{Context, Message, Role, ToolCall, Usage};
use ensemble::providers::{Response, ScriptedTurn};
use ensemble::tooling::{ParamKind, ParamSpec, ToolSpec};

pub const KINDS: [ParamKind; 6] = [
    ParamKind::String,
    ParamKind::Integer,
    ParamKind::Number,
    ParamKind::Boolean,
    ParamKind::Array,
    ParamKind::Object,
];

const ALPHABET: &[&str] = &[
    "a", "b", "z", " ", "\n", "\t", "\"", "\\", "{", "}", "[", "]", ":", ",", "%", "$", "_", "é", "ß", "中", "😀",
    "data:", "\r", "/", "<", ">",
];

pub fn text<R: Rng>(rng: &mut R, max_pieces: usize) -> String {
    let n = rng.gen_range(0..=max_pieces);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn ident<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(1..8);
    let mut s: String = (0..len).map(|_| (b'a' + rng.gen_range(0..26)) as char).collect();
    if rng.gen_bool(0.3) {
        s.push('_');
        s.push((b'0' + rng.gen_range(0..10)) as char);
    }
    s
}

pub fn json_value<R: Rng>(rng: &mut R, depth: usize) -> Value {
    let top = if depth == 0 { 5 } else { 7 };
    match rng.gen_range(0..top) {
        0 => Value::Null,
        1 => Value::Bool(rng.gen()),
        2 => json!(rng.gen_range(-1000i64..1000)),
        3 => json!((rng.gen_range(-1e6..1e6f64) * 1000.0).round() / 1000.0),
        4 => Value::String(text(rng, 6)),
        5 => Value::Array((0..rng.gen_range(0..4)).map(|_| json_value(rng, depth - 1)).collect()),
        _ => Value::Object(args(rng, depth - 1)),
    }
}

pub fn args<R: Rng>(rng: &mut R, depth: usize) -> Map<String, Value> {
    (0..rng.gen_range(0..4))
        .map(|_| (ident(rng), json_value(rng, depth)))
        .collect()
}

/// A value of exactly `kind`.
pub fn value_of<R: Rng>(rng: &mut R, kind: ParamKind, item: Option<ParamKind>) -> Value {
    match kind {
        ParamKind::String => Value::String(text(rng, 5)),
        ParamKind::Integer => {
            if rng.gen_bool(0.2) {
                json!(rng.gen_range(-50..50) as f64)
            } else {
                json!(rng.gen_range(-1_000_000i64..1_000_000))
            }
        }
        ParamKind::Number => {
            if rng.gen_bool(0.5) {
                json!(rng.gen_range(-100i64..100))
            } else {
                json!(rng.gen_range(-100.0..100.0f64) + 0.25)
            }
        }
        ParamKind::Boolean => Value::Bool(rng.gen()),
        ParamKind::Array => Value::Array(
            (0..rng.gen_range(0..4))
                .map(|_| match item {
                    Some(k) => value_of(rng, k, None),
                    None => json_value(rng, 1),
                })
                .collect(),
        ),
        ParamKind::Object => Value::Object(args(rng, 1)),
    }
}

pub fn tool_spec<R: Rng>(rng: &mut R) -> ToolSpec {
    let mut params = Vec::new();
    let mut used = HashSet::new();
    for _ in 0..rng.gen_range(0..6) {
        let name = ident(rng);
        if !used.insert(name.clone()) {
            continue;
        }
        let kind = *KINDS.choose(rng).unwrap();
        let item = (kind == ParamKind::Array && rng.gen_bool(0.5)).then(|| *KINDS[..4].choose(rng).unwrap());
        let mut p = match rng.gen_range(0..4) {
            0 => ParamSpec::required(name, kind),
            1 => ParamSpec::optional(name, kind, None),
            2 => {
                let d = value_of(rng, kind, item);
                ParamSpec::optional(name, kind, Some(d))
            }
            _ => {
                let initial = value_of(rng, kind, item);
                ParamSpec::state(name, kind, initial)
            }
        }
        .describe(format!("param {}", used.len()));
        if let Some(i) = item {
            p = p.items(i);
        }
        params.push(p);
    }
    ToolSpec::new(ident(rng), "randomized tool", params).expect("generated spec is well formed")
}

/// Arguments for `spec`: valid ones, or with one random defect.
pub fn args_for<R: Rng>(rng: &mut R, spec: &ToolSpec) -> Map<String, Value> {
    let mut out = Map::new();
    for p in spec.runtime_params() {
        if p.required || rng.gen_bool(0.6) {
            out.insert(p.name.clone(), value_of(rng, p.kind, p.item_kind));
        }
    }
    match rng.gen_range(0..6) {
        0 => {
            out.insert(ident(rng) + "_x", json_value(rng, 1));
        }
        1 => {
            if let Some(p) = spec.runtime_params().collect::<Vec<_>>().choose(rng) {
                out.insert(p.name.clone(), json_value(rng, 1));
            }
        }
        2 => {
            if let Some(p) = spec
                .runtime_params()
                .filter(|p| p.required)
                .collect::<Vec<_>>()
                .choose(rng)
            {
                out.remove(&p.name);
            }
        }
        3 => {
            if let Some(p) = spec.state_params().collect::<Vec<_>>().choose(rng) {
                out.insert(p.name.clone(), value_of(rng, p.kind, p.item_kind));
            }
        }
        _ => {}
    }
    out
}

pub fn tool_call<R: Rng>(rng: &mut R, id: String) -> ToolCall {
    ToolCall::new(
        id,
        *["search", "read_file", "calc", "echo"].choose(rng).unwrap(),
        args(rng, 2),
    )
}

/// A scripted turn with up to `max_calls` parallel calls.
pub fn scripted_turn<R: Rng>(rng: &mut R, max_calls: usize, serial: &mut usize) -> ScriptedTurn {
    let calls = (0..rng.gen_range(0..=max_calls))
        .map(|_| {
            *serial += 1;
            tool_call(rng, format!("call_{serial}"))
        })
        .collect::<Vec<_>>();
    let mut turn = if calls.is_empty() || rng.gen_bool(0.5) {
        let mut t = ScriptedTurn::text(text(rng, 40));
        t.tool_calls = calls;
        t
    } else {
        ScriptedTurn::calls(calls)
    };
    if rng.gen_bool(0.8) {
        turn = turn.with_usage(rng.gen_range(0..5000), rng.gen_range(0..2000));
    }
    turn
}

/// Random history that may contain orphans, duplicates and id-less calls.
pub fn history<R: Rng>(rng: &mut R) -> Context {
    let mut ctx = Context::new();
    let mut ids: Vec<String> = Vec::new();
    let mut serial = 0;
    if rng.gen_bool(0.5) {
        ctx.add_message(Message::system(text(rng, 10))).unwrap();
    }
    for _ in 0..rng.gen_range(0..14) {
        let m = match rng.gen_range(0..10) {
            0..=2 => Message::user(text(rng, 12)),
            3..=5 => {
                let calls: Vec<ToolCall> = (0..rng.gen_range(0..4))
                    .map(|_| {
                        let id = if rng.gen_bool(0.15) {
                            String::new()
                        } else {
                            serial += 1;
                            format!("c{serial}")
                        };
                        ids.push(id.clone());
                        tool_call(rng, id)
                    })
                    .collect();
                let mut m = Message::assistant_with_calls(text(rng, 12), calls);
                if rng.gen_bool(0.7) {
                    let cost = rng.gen_range(0..100_000) as f64 * 1e-7;
                    m = m.with_usage(Usage::new(rng.gen_range(0..999), rng.gen_range(0..999), cost));
                }
                m
            }
            _ => {
                let id = match rng.gen_range(0..4) {
                    0 => format!("stray{}", rng.gen_range(0..5)),
                    1 => String::new(),
                    _ => ids.choose(rng).cloned().unwrap_or_default(),
                };
                let mut m = Message::tool_result(id, *["search", "calc", "echo"].choose(rng).unwrap(), text(rng, 8));
                if rng.gen_bool(0.2) {
                    m = m.with_meta("subagent_cost", json!(rng.gen_range(0..1000) as f64 * 1e-6));
                }
                m
            }
        };
        ctx.add_message(m).unwrap();
    }
    if rng.gen_bool(0.3) {
        ctx.metadata_mut().insert(
            "todos".into(),
            json!([{"text": text(rng, 4), "done": rng.gen::<bool>()}]),
        );
    }
    ctx
}

/// Quadratic reference: a result is kept when the nearest earlier assistant
/// message with calls has a call with its id and no earlier result in the
/// list answered that same (assistant, id) pair.
pub fn brute_force_orphans(messages: &[Message]) -> Vec<usize> {
    let mut orphans = Vec::new();
    for (j, m) in messages.iter().enumerate() {
        if m.role != Role::ToolResult {
            continue;
        }
        let id = m.tool_call_id.clone().unwrap_or_default();
        let anchor = (0..j)
            .rev()
            .find(|&i| messages[i].role == Role::Assistant && !messages[i].tool_calls.is_empty());
        let Some(a) = anchor else {
            orphans.push(j);
            continue;
        };
        let has_call = messages[a].tool_calls.iter().any(|c| c.id == id);
        let earlier_answer = (a + 1..j).any(|k| {
            messages[k].role == Role::ToolResult
                && messages[k].tool_call_id.as_deref() == Some(id.as_str())
                && !orphans.contains(&k)
        });
        if !has_call || earlier_answer {
            orphans.push(j);
        }
    }
    orphans
}

pub fn cost_sum(messages: &[Message]) -> f64 {
    messages
        .iter()
        .map(|m| m.usage.map_or(0.0, |u| u.cost) + m.meta.get("subagent_cost").and_then(Value::as_f64).unwrap_or(0.0))
        .sum()
}

/// Calls of any assistant message that never received a result.
pub fn unanswered(messages: &[Message]) -> Vec<String> {
    let answered: HashSet<&str> = messages
        .iter()
        .filter(|m| m.role == Role::ToolResult)
        .filter_map(|m| m.tool_call_id.as_deref())
        .collect();
    messages
        .iter()
        .flat_map(|m| m.tool_calls.iter())
        .filter(|c| !answered.contains(c.id.as_str()))
        .map(|c| c.id.clone())
        .collect()
}

/// Persisted JSON with timestamps blanked and generated ids replaced by
/// their order of first appearance.
pub fn mask_persisted(bytes: &[u8]) -> String {
    let mut v: Value = serde_json::from_slice(bytes).expect("persisted JSON");
    let mut ids = HashMap::new();
    mask(&mut v, &mut ids);
    serde_json::to_string_pretty(&v).unwrap()
}

fn mask(v: &mut Value, ids: &mut HashMap<String, String>) {
    match v {
        Value::Object(map) => {
            for (k, val) in map.iter_mut() {
                match (k.as_str(), &val) {
                    ("timestamp" | "read_at", Value::String(_)) => *val = json!("<time>"),
                    ("id" | "tool_call_id", Value::String(s)) if s.starts_with("call_") => {
                        let n = ids.len();
                        let masked = ids.entry(s.clone()).or_insert_with(|| format!("<id{n}>")).clone();
                        *val = json!(masked);
                    }
                    _ => mask(val, ids),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| mask(x, ids)),
        _ => {}
    }
}

/// Blocking and streamed responses differ only in the message timestamp.
pub fn same_response(a: &Response, b: &Response) -> bool {
    let mut b = b.clone();
    b.message.timestamp = a.message.timestamp;
    *a == b
}

/// What a shell does with one-operation commands, computed without a shell.
#[derive(Debug, Clone, PartialEq)]
pub struct RefShell {
    pub cwd: PathBuf,
    pub env: BTreeMap<String, String>,
    pub roots: Vec<PathBuf>,
}

impl RefShell {
    pub fn new(cwd: &Path) -> Self {
        RefShell {
            cwd: cwd.to_path_buf(),
            env: BTreeMap::new(),
            roots: vec![cwd.to_path_buf()],
        }
    }

    /// `cd DIR` or `export NAME=VALUE`.
    pub fn apply(&mut self, command: &str) {
        if let Some(dir) = command.strip_prefix("cd ") {
            let target = lexical_join(&self.cwd, dir);
            if target.is_dir() && self.roots.iter().any(|r| target.starts_with(r)) {
                self.cwd = target;
            }
        } else if let Some(assign) = command.strip_prefix("export ") {
            let (k, v) = assign.split_once('=').expect("NAME=VALUE");
            self.env.insert(k.to_string(), v.to_string());
        }
    }
}

fn lexical_join(base: &Path, rel: &str) -> PathBuf {
    let mut out = if rel.starts_with('/') {
        PathBuf::from("/")
    } else {
        base.to_path_buf()
    };
    for c in Path::new(rel).components() {
        match c {
            Component::ParentDir => {
                out.pop();
            }
            Component::Normal(n) => out.push(n),
            _ => {}
        }
    }
    out
}
