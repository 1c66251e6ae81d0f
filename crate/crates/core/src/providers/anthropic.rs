//! Anthropic messages dialect.

use std::collections::HashMap;

use serde_json::{json, Map, Value};

use super::stream::{Fragment, StreamEvent};
use super::{ProviderError, Response, StopReason};
use crate::model::{Context, Message, Role, ToolCall, Usage};
use crate::tooling::ToolSpec;

pub const API_VERSION: &str = "2023-06-01";
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

pub fn tool_schema(spec: &ToolSpec) -> Value {
    json!({
        "name": spec.name,
        "description": spec.description,
        "input_schema": spec.json_schema(),
    })
}

fn is_failure(m: &Message) -> bool {
    m.meta.get("status").and_then(Value::as_str) == Some("failure")
}

fn blocks_for(m: &Message) -> Vec<Value> {
    let mut blocks = Vec::new();
    match m.role {
        Role::User | Role::System => {
            if !m.text.is_empty() {
                blocks.push(json!({"type": "text", "text": m.text}));
            }
        }
        Role::Assistant => {
            if !m.text.is_empty() {
                blocks.push(json!({"type": "text", "text": m.text}));
            }
            for c in &m.tool_calls {
                blocks.push(json!({
                    "type": "tool_use",
                    "id": c.id,
                    "name": c.name,
                    "input": Value::Object(c.arguments.clone()),
                }));
            }
        }
        Role::ToolResult => {
            let mut block = json!({
                "type": "tool_result",
                "tool_use_id": m.tool_call_id.clone().unwrap_or_default(),
                "content": m.text,
            });
            if is_failure(m) {
                block["is_error"] = json!(true);
            }
            blocks.push(block);
        }
    }
    blocks
}

pub(crate) fn encode_request(context: &Context, tools: &[ToolSpec], model: &str, stream: bool) -> Value {
    let system: Vec<&str> = context
        .messages()
        .iter()
        .filter(|m| m.role == Role::System)
        .map(|m| m.text.as_str())
        .collect();

    // consecutive same-role turns are merged; tool results travel as user turns
    let mut turns: Vec<(&'static str, Vec<Value>)> = Vec::new();
    for m in context.messages() {
        let role = match m.role {
            Role::System => continue,
            Role::User | Role::ToolResult => "user",
            Role::Assistant => "assistant",
        };
        let blocks = blocks_for(m);
        if blocks.is_empty() {
            continue;
        }
        match turns.last_mut() {
            Some((r, existing)) if *r == role => existing.extend(blocks),
            _ => turns.push((role, blocks)),
        }
    }
    let messages: Vec<Value> = turns
        .into_iter()
        .map(|(role, blocks)| {
            let single_text = blocks.len() == 1 && blocks[0]["type"] == "text";
            let content = if single_text {
                blocks[0]["text"].clone()
            } else {
                Value::Array(blocks)
            };
            json!({"role": role, "content": content})
        })
        .collect();

    let mut body = Map::new();
    body.insert("model".into(), json!(model));
    body.insert("max_tokens".into(), json!(DEFAULT_MAX_TOKENS));
    if !system.is_empty() {
        body.insert("system".into(), json!(system.join("\n\n")));
    }
    body.insert("messages".into(), Value::Array(messages));
    if !tools.is_empty() {
        body.insert("tools".into(), tools.iter().map(tool_schema).collect());
    }
    if stream {
        body.insert("stream".into(), json!(true));
    }
    Value::Object(body)
}

fn stop_reason(s: &str) -> StopReason {
    match s {
        "end_turn" | "stop_sequence" => StopReason::EndTurn,
        "tool_use" => StopReason::ToolUse,
        "max_tokens" => StopReason::MaxTokens,
        _ => StopReason::Other,
    }
}

fn stop_reason_str(r: StopReason) -> &'static str {
    match r {
        StopReason::EndTurn => "end_turn",
        StopReason::ToolUse => "tool_use",
        StopReason::MaxTokens => "max_tokens",
        StopReason::Other => "refusal",
    }
}

pub(crate) fn decode_response(body: &Value) -> Result<Response, ProviderError> {
    if body.get("type").and_then(Value::as_str) == Some("error") {
        return Err(ProviderError::MalformedResponse(format!(
            "error body: {}",
            body.get("error").unwrap_or(&Value::Null)
        )));
    }
    let content = body
        .get("content")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::MalformedResponse("missing content".into()))?;
    let mut text = String::new();
    let mut calls = Vec::new();
    for block in content {
        match block.get("type").and_then(Value::as_str) {
            Some("text") => text.push_str(block.get("text").and_then(Value::as_str).unwrap_or_default()),
            Some("tool_use") => {
                let name = block
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| ProviderError::MalformedResponse("tool_use without name".into()))?;
                let id = block.get("id").and_then(Value::as_str).unwrap_or_default();
                let arguments = match block.get("input") {
                    Some(Value::Object(m)) => m.clone(),
                    None | Some(Value::Null) => Map::new(),
                    Some(other) => return Err(ProviderError::ToolArgsNotJson(other.to_string())),
                };
                calls.push(ToolCall::new(id, name, arguments));
            }
            _ => {}
        }
    }
    let stop = body
        .get("stop_reason")
        .and_then(Value::as_str)
        .map(stop_reason)
        .unwrap_or(StopReason::Other);
    let usage = body
        .get("usage")
        .map(|u| {
            Usage::new(
                u.get("input_tokens").and_then(Value::as_u64).unwrap_or(0),
                u.get("output_tokens").and_then(Value::as_u64).unwrap_or(0),
                0.0,
            )
        })
        .unwrap_or_default();
    Ok(Response::assemble(text, calls, usage, stop))
}

/// Incremental decoder for the typed event stream. Cumulative usage counters
/// are turned into increments.
#[derive(Debug, Default)]
pub(crate) struct EventDecoder {
    /// content block index → tool call ordinal
    tool_blocks: HashMap<u64, usize>,
    stop: Option<StopReason>,
    seen_input: u64,
    seen_output: u64,
}

impl EventDecoder {
    fn usage_delta(&mut self, usage: &Value) -> Option<StreamEvent> {
        let input = usage.get("input_tokens").and_then(Value::as_u64);
        let output = usage.get("output_tokens").and_then(Value::as_u64);
        let delta = |seen: &mut u64, now: Option<u64>| {
            now.map(|n| {
                let d = n.saturating_sub(*seen);
                *seen = (*seen).max(n);
                d
            })
        };
        let input_tokens = delta(&mut self.seen_input, input);
        let output_tokens = delta(&mut self.seen_output, output);
        if input_tokens.is_none() && output_tokens.is_none() {
            return None;
        }
        Some(StreamEvent::UsageDelta {
            input_tokens,
            output_tokens,
        })
    }

    pub fn decode(&mut self, event: Option<&str>, data: &str) -> Result<Vec<StreamEvent>, ProviderError> {
        let payload: Value = serde_json::from_str(data)
            .map_err(|e| ProviderError::StreamProtocol(format!("event data is not JSON: {e}")))?;
        let kind = payload
            .get("type")
            .and_then(Value::as_str)
            .or(event)
            .ok_or_else(|| ProviderError::StreamProtocol("event without type".into()))?;
        if let Some(name) = event {
            if name != kind {
                return Err(ProviderError::StreamProtocol(format!(
                    "event line {name:?} disagrees with payload type {kind:?}"
                )));
            }
        }
        let mut events = Vec::new();
        match kind {
            "message_start" => {
                if let Some(u) = payload.pointer("/message/usage") {
                    events.extend(self.usage_delta(u));
                }
            }
            "content_block_start" => {
                let block = payload.get("content_block").unwrap_or(&Value::Null);
                let index = payload.get("index").and_then(Value::as_u64).unwrap_or(0);
                match block.get("type").and_then(Value::as_str) {
                    Some("tool_use") => {
                        let ordinal = self.tool_blocks.len();
                        self.tool_blocks.insert(index, ordinal);
                        let initial = match block.get("input") {
                            Some(Value::Object(m)) if !m.is_empty() => Value::Object(m.clone()).to_string(),
                            _ => String::new(),
                        };
                        events.push(StreamEvent::ToolCallDelta {
                            index: ordinal,
                            id: block.get("id").and_then(Value::as_str).map(str::to_string),
                            name: block.get("name").and_then(Value::as_str).map(str::to_string),
                            args_fragment: initial,
                        });
                    }
                    Some("text") => {
                        let text = block.get("text").and_then(Value::as_str).unwrap_or_default();
                        if !text.is_empty() {
                            events.push(StreamEvent::TextDelta { text: text.to_string() });
                        }
                    }
                    _ => {}
                }
            }
            "content_block_delta" => {
                let index = payload.get("index").and_then(Value::as_u64).unwrap_or(0);
                let delta = payload.get("delta").unwrap_or(&Value::Null);
                match delta.get("type").and_then(Value::as_str) {
                    Some("text_delta") => {
                        let text = delta.get("text").and_then(Value::as_str).unwrap_or_default();
                        if !text.is_empty() {
                            events.push(StreamEvent::TextDelta { text: text.to_string() });
                        }
                    }
                    Some("input_json_delta") => {
                        let ordinal = *self.tool_blocks.get(&index).ok_or_else(|| {
                            ProviderError::StreamProtocol(format!("input_json_delta for unknown block {index}"))
                        })?;
                        events.push(StreamEvent::ToolCallDelta {
                            index: ordinal,
                            id: None,
                            name: None,
                            args_fragment: delta
                                .get("partial_json")
                                .and_then(Value::as_str)
                                .unwrap_or_default()
                                .to_string(),
                        });
                    }
                    _ => {}
                }
            }
            "message_delta" => {
                if let Some(r) = payload.pointer("/delta/stop_reason").and_then(Value::as_str) {
                    self.stop = Some(stop_reason(r));
                }
                if let Some(u) = payload.get("usage") {
                    events.extend(self.usage_delta(u));
                }
            }
            "message_stop" => events.push(StreamEvent::Done {
                stop_reason: self.stop.unwrap_or(StopReason::Other),
            }),
            "error" => {
                return Err(ProviderError::StreamProtocol(format!(
                    "provider error: {}",
                    payload.get("error").unwrap_or(&Value::Null)
                )))
            }
            // ping, content_block_stop and future event types
            _ => {}
        }
        Ok(events)
    }
}

pub fn response_body(response: &Response, model: &str) -> Value {
    let msg = &response.message;
    let mut content = Vec::new();
    if !msg.text.is_empty() {
        content.push(json!({"type": "text", "text": msg.text}));
    }
    for c in &msg.tool_calls {
        content
            .push(json!({"type": "tool_use", "id": c.id, "name": c.name, "input": Value::Object(c.arguments.clone())}));
    }
    json!({
        "id": "msg_scripted",
        "type": "message",
        "role": "assistant",
        "model": model,
        "content": content,
        "stop_reason": stop_reason_str(response.stop_reason),
        "stop_sequence": null,
        "usage": {
            "input_tokens": response.usage.input_tokens,
            "output_tokens": response.usage.output_tokens,
        }
    })
}

pub fn render_stream(fragments: &[Fragment], response: &Response, model: &str) -> String {
    let mut out = String::new();
    let mut push = |event: &str, v: Value| {
        out.push_str("event: ");
        out.push_str(event);
        out.push_str("\ndata: ");
        out.push_str(&v.to_string());
        out.push_str("\n\n");
    };
    let usage = response.usage;
    let initial_output = usage.output_tokens.min(1);
    push(
        "message_start",
        json!({"type": "message_start", "message": {
            "id": "msg_scripted", "type": "message", "role": "assistant", "model": model,
            "content": [], "stop_reason": null, "stop_sequence": null,
            "usage": {"input_tokens": usage.input_tokens, "output_tokens": initial_output},
        }}),
    );
    let has_text = fragments.iter().any(|f| matches!(f, Fragment::Text(_)));
    let tool_base = usize::from(has_text);
    if has_text {
        push(
            "content_block_start",
            json!({"type": "content_block_start", "index": 0, "content_block": {"type": "text", "text": ""}}),
        );
    }
    push("ping", json!({"type": "ping"}));
    // content blocks stream one after another, so fragments are regrouped by block
    let mut ordered: Vec<&Fragment> = fragments.iter().collect();
    ordered.sort_by_key(|f| match f {
        Fragment::Text(_) => 0,
        Fragment::Call { index, .. } => tool_base + index,
    });
    let mut started = std::collections::BTreeSet::new();
    let mut open: Option<usize> = has_text.then_some(0);
    for f in ordered {
        match f {
            Fragment::Text(t) => push(
                "content_block_delta",
                json!({"type": "content_block_delta", "index": 0, "delta": {"type": "text_delta", "text": t}}),
            ),
            Fragment::Call { index, id, name, args } => {
                let block = tool_base + index;
                if started.insert(*index) {
                    if let Some(prev) = open.replace(block) {
                        push(
                            "content_block_stop",
                            json!({"type": "content_block_stop", "index": prev}),
                        );
                    }
                    push(
                        "content_block_start",
                        json!({"type": "content_block_start", "index": block, "content_block": {
                            "type": "tool_use", "id": id.clone().unwrap_or_default(),
                            "name": name.clone().unwrap_or_default(), "input": {},
                        }}),
                    );
                }
                if !args.is_empty() {
                    push(
                        "content_block_delta",
                        json!({"type": "content_block_delta", "index": block, "delta": {"type": "input_json_delta", "partial_json": args}}),
                    );
                }
            }
        }
    }
    if let Some(prev) = open {
        push(
            "content_block_stop",
            json!({"type": "content_block_stop", "index": prev}),
        );
    }
    push(
        "message_delta",
        json!({"type": "message_delta",
               "delta": {"stop_reason": stop_reason_str(response.stop_reason), "stop_sequence": null},
               "usage": {"output_tokens": usage.output_tokens}}),
    );
    push("message_stop", json!({"type": "message_stop"}));
    out
}
