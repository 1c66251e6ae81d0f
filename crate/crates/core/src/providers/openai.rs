//! OpenAI chat-completions dialect (also spoken by most local and
//! OpenAI-compatible servers).

use serde_json::{json, Map, Value};

use super::stream::{Fragment, StreamEvent};
use super::{ProviderError, Response, StopReason};
use crate::model::{Context, Role, ToolCall, Usage};
use crate::tooling::ToolSpec;

pub fn tool_schema(spec: &ToolSpec) -> Value {
    json!({
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": spec.json_schema(),
        }
    })
}

pub(crate) fn encode_request(context: &Context, tools: &[ToolSpec], model: &str, stream: bool) -> Value {
    let messages: Vec<Value> = context
        .messages()
        .iter()
        .map(|m| match m.role {
            Role::System => json!({"role": "system", "content": m.text}),
            Role::User => json!({"role": "user", "content": m.text}),
            Role::Assistant if m.tool_calls.is_empty() => {
                json!({"role": "assistant", "content": m.text})
            }
            Role::Assistant => {
                let calls: Vec<Value> = m
                    .tool_calls
                    .iter()
                    .map(|c| {
                        json!({
                            "id": c.id,
                            "type": "function",
                            "function": {
                                "name": c.name,
                                "arguments": Value::Object(c.arguments.clone()).to_string(),
                            }
                        })
                    })
                    .collect();
                let content = if m.text.is_empty() {
                    Value::Null
                } else {
                    Value::String(m.text.clone())
                };
                json!({"role": "assistant", "content": content, "tool_calls": calls})
            }
            Role::ToolResult => json!({
                "role": "tool",
                "tool_call_id": m.tool_call_id.clone().unwrap_or_default(),
                "content": m.text,
            }),
        })
        .collect();

    let mut body = Map::new();
    body.insert("model".into(), json!(model));
    body.insert("messages".into(), Value::Array(messages));
    if !tools.is_empty() {
        body.insert("tools".into(), tools.iter().map(tool_schema).collect());
    }
    if stream {
        body.insert("stream".into(), json!(true));
        body.insert("stream_options".into(), json!({"include_usage": true}));
    }
    Value::Object(body)
}

fn stop_reason(s: &str) -> StopReason {
    match s {
        "stop" => StopReason::EndTurn,
        "tool_calls" | "function_call" => StopReason::ToolUse,
        "length" => StopReason::MaxTokens,
        _ => StopReason::Other,
    }
}

fn stop_reason_str(r: StopReason) -> &'static str {
    match r {
        StopReason::EndTurn => "stop",
        StopReason::ToolUse => "tool_calls",
        StopReason::MaxTokens => "length",
        StopReason::Other => "content_filter",
    }
}

pub(crate) fn parse_arguments(raw: &str) -> Result<Map<String, Value>, ProviderError> {
    if raw.trim().is_empty() {
        return Ok(Map::new());
    }
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(ProviderError::ToolArgsNotJson(format!(
            "expected an object, got {other}"
        ))),
        Err(e) => Err(ProviderError::ToolArgsNotJson(format!("{e}: {raw}"))),
    }
}

pub(crate) fn decode_response(body: &Value) -> Result<Response, ProviderError> {
    if let Some(err) = body.get("error") {
        return Err(ProviderError::MalformedResponse(format!("error body: {err}")));
    }
    let choice = body
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| ProviderError::MalformedResponse("missing choices".into()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| ProviderError::MalformedResponse("choice has no message".into()))?;
    let text = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut calls = Vec::new();
    if let Some(raw_calls) = message.get("tool_calls").and_then(Value::as_array) {
        for c in raw_calls {
            let function = c
                .get("function")
                .ok_or_else(|| ProviderError::MalformedResponse("tool call without function".into()))?;
            let name = function
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| ProviderError::MalformedResponse("tool call without name".into()))?;
            let arguments = match function.get("arguments") {
                Some(Value::String(s)) => parse_arguments(s)?,
                Some(Value::Object(m)) => m.clone(),
                None | Some(Value::Null) => Map::new(),
                Some(other) => {
                    return Err(ProviderError::ToolArgsNotJson(other.to_string()));
                }
            };
            let id = c.get("id").and_then(Value::as_str).unwrap_or_default();
            calls.push(ToolCall::new(id, name, arguments));
        }
    }
    let stop = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .map(stop_reason)
        .unwrap_or(StopReason::Other);
    let usage = body.get("usage").map(|u| {
        Usage::new(
            u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
            0.0,
        )
    });
    Ok(Response::assemble(text, calls, usage.unwrap_or_default(), stop))
}

/// Incremental decoder for `chat.completion.chunk` frames.
#[derive(Debug, Default)]
pub(crate) struct ChunkDecoder {
    finish: Option<StopReason>,
}

impl ChunkDecoder {
    /// Returns the events carried by one `data:` payload; `Done` on `[DONE]`.
    pub fn decode(&mut self, data: &str) -> Result<Vec<StreamEvent>, ProviderError> {
        if data.trim() == "[DONE]" {
            return Ok(vec![StreamEvent::Done {
                stop_reason: self.finish.unwrap_or(StopReason::Other),
            }]);
        }
        let chunk: Value =
            serde_json::from_str(data).map_err(|e| ProviderError::StreamProtocol(format!("chunk is not JSON: {e}")))?;
        if let Some(err) = chunk.get("error") {
            return Err(ProviderError::StreamProtocol(format!("provider error: {err}")));
        }
        let mut events = Vec::new();
        if let Some(choice) = chunk.get("choices").and_then(Value::as_array).and_then(|c| c.first()) {
            if let Some(delta) = choice.get("delta") {
                if let Some(text) = delta.get("content").and_then(Value::as_str) {
                    if !text.is_empty() {
                        events.push(StreamEvent::TextDelta { text: text.to_string() });
                    }
                }
                if let Some(calls) = delta.get("tool_calls").and_then(Value::as_array) {
                    for (pos, c) in calls.iter().enumerate() {
                        let index = c.get("index").and_then(Value::as_u64).unwrap_or(pos as u64) as usize;
                        let function = c.get("function");
                        events.push(StreamEvent::ToolCallDelta {
                            index,
                            id: c.get("id").and_then(Value::as_str).map(str::to_string),
                            name: function
                                .and_then(|f| f.get("name"))
                                .and_then(Value::as_str)
                                .map(str::to_string),
                            args_fragment: function
                                .and_then(|f| f.get("arguments"))
                                .and_then(Value::as_str)
                                .unwrap_or_default()
                                .to_string(),
                        });
                    }
                }
            }
            if let Some(reason) = choice.get("finish_reason").and_then(Value::as_str) {
                self.finish = Some(stop_reason(reason));
            }
        }
        if let Some(u) = chunk.get("usage").filter(|u| u.is_object()) {
            events.push(StreamEvent::UsageDelta {
                input_tokens: u.get("prompt_tokens").and_then(Value::as_u64),
                output_tokens: u.get("completion_tokens").and_then(Value::as_u64),
            });
        }
        Ok(events)
    }
}

/// Non-streaming body a server would return for `response`.
pub fn response_body(response: &Response, model: &str) -> Value {
    let msg = &response.message;
    let mut message = Map::new();
    message.insert("role".into(), json!("assistant"));
    message.insert(
        "content".into(),
        if msg.text.is_empty() && !msg.tool_calls.is_empty() {
            Value::Null
        } else {
            json!(msg.text)
        },
    );
    if !msg.tool_calls.is_empty() {
        let calls: Vec<Value> = msg
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": {"name": c.name, "arguments": Value::Object(c.arguments.clone()).to_string()},
                })
            })
            .collect();
        message.insert("tool_calls".into(), Value::Array(calls));
    }
    json!({
        "id": "chatcmpl-scripted",
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": message,
            "finish_reason": stop_reason_str(response.stop_reason),
        }],
        "usage": {
            "prompt_tokens": response.usage.input_tokens,
            "completion_tokens": response.usage.output_tokens,
            "total_tokens": response.usage.input_tokens + response.usage.output_tokens,
        }
    })
}

/// SSE body a server would stream for the given fragments.
pub fn render_stream(fragments: &[Fragment], response: &Response, model: &str) -> String {
    let chunk = |delta: Value, finish: Value| {
        json!({
            "id": "chatcmpl-scripted",
            "object": "chat.completion.chunk",
            "model": model,
            "choices": [{"index": 0, "delta": delta, "finish_reason": finish}],
        })
    };
    let mut out = String::new();
    let mut push = |v: Value| {
        out.push_str("data: ");
        out.push_str(&v.to_string());
        out.push_str("\n\n");
    };
    push(chunk(json!({"role": "assistant", "content": ""}), Value::Null));
    for f in fragments {
        match f {
            Fragment::Text(t) => push(chunk(json!({"content": t}), Value::Null)),
            Fragment::Call { index, id, name, args } => {
                let mut call = Map::new();
                call.insert("index".into(), json!(index));
                let mut function = Map::new();
                if let Some(id) = id {
                    call.insert("id".into(), json!(id));
                    call.insert("type".into(), json!("function"));
                }
                if let Some(name) = name {
                    function.insert("name".into(), json!(name));
                }
                function.insert("arguments".into(), json!(args));
                call.insert("function".into(), Value::Object(function));
                push(chunk(json!({"tool_calls": [Value::Object(call)]}), Value::Null));
            }
        }
    }
    push(chunk(json!({}), json!(stop_reason_str(response.stop_reason))));
    push(json!({
        "id": "chatcmpl-scripted",
        "object": "chat.completion.chunk",
        "model": model,
        "choices": [],
        "usage": {
            "prompt_tokens": response.usage.input_tokens,
            "completion_tokens": response.usage.output_tokens,
            "total_tokens": response.usage.input_tokens + response.usage.output_tokens,
        }
    }));
    out.push_str("data: [DONE]\n\n");
    out
}
