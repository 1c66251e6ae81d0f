//! Deterministic scripted provider.
//!
//! Every call consumes the next scripted turn. Requests are encoded with the
//! configured dialect and recorded; responses are rendered into that
//! dialect's wire format and decoded again, so the mock exercises the same
//! codec and stream-parsing paths as a real backend.

use std::collections::VecDeque;
use std::io::Cursor;
use std::path::Path;
use std::sync::Mutex;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::stream::plan_fragments;
use super::{
    anthropic, decode_response, encode_request, openai, parse_stream, EventStream, ModelRef, PricingTable, Provider,
    ProviderError, Response, StopReason, WireDialect,
};
use crate::model::{Context, ToolCall, Usage};
use crate::tooling::ToolSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenCounts {
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

/// One scripted assistant turn, or a simulated provider failure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptedTurn {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedTurn {
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn calls(calls: Vec<ToolCall>) -> Self {
        ScriptedTurn {
            tool_calls: calls,
            ..Default::default()
        }
    }

    pub fn call(id: &str, name: &str, args: Value) -> Self {
        let args = args.as_object().cloned().unwrap_or_default();
        Self::calls(vec![ToolCall::new(id, name, args)])
    }

    pub fn error(message: impl Into<String>) -> Self {
        ScriptedTurn {
            error: Some(message.into()),
            ..Default::default()
        }
    }

    pub fn with_usage(mut self, input_tokens: u64, output_tokens: u64) -> Self {
        self.usage = Some(TokenCounts {
            input_tokens,
            output_tokens,
        });
        self
    }

    /// The unpriced response this turn stands for.
    pub fn response(&self) -> Response {
        let usage = self.usage.unwrap_or_default();
        let stop = self.stop_reason.unwrap_or(if self.tool_calls.is_empty() {
            StopReason::EndTurn
        } else {
            StopReason::ToolUse
        });
        Response::assemble(
            self.text.clone(),
            self.tool_calls.clone(),
            Usage::new(usage.input_tokens, usage.output_tokens, 0.0),
            stop,
        )
    }
}

/// Transcript fixture: `{"dialect": "openai", "chunk_size": 4, "turns": [...]}`
/// or a bare array of turns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialect: Option<WireDialect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<usize>,
    #[serde(default)]
    pub repeat_last: bool,
    pub turns: Vec<ScriptedTurn>,
}

impl Transcript {
    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let raw: Value =
            serde_json::from_str(text).map_err(|e| ProviderError::Config(format!("transcript is not JSON: {e}")))?;
        let parsed = if raw.is_array() {
            serde_json::from_value(raw).map(|turns| Transcript {
                turns,
                ..Default::default()
            })
        } else {
            serde_json::from_value(raw)
        };
        parsed.map_err(|e| ProviderError::Config(format!("bad transcript: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

pub struct MockProvider {
    model: ModelRef,
    pricing: PricingTable,
    turns: Mutex<VecDeque<ScriptedTurn>>,
    repeat_last: bool,
    last: Mutex<Option<ScriptedTurn>>,
    chunk_size: usize,
    rng: Mutex<StdRng>,
    requests: Mutex<Vec<Value>>,
}

impl MockProvider {
    pub fn new(turns: Vec<ScriptedTurn>) -> Self {
        MockProvider {
            model: ModelRef::new("mock", "scripted", "http://mock.invalid/", "", WireDialect::OpenAiChat)
                .expect("static model ref"),
            pricing: PricingTable::new().with("mock", "*", 0.0, 0.0),
            turns: Mutex::new(turns.into()),
            repeat_last: false,
            last: Mutex::new(None),
            chunk_size: 4,
            rng: Mutex::new(StdRng::seed_from_u64(0)),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn from_transcript(t: Transcript) -> Self {
        let mut mock = Self::new(t.turns).repeating(t.repeat_last);
        if let Some(d) = t.dialect {
            mock = mock.with_dialect(d);
        }
        if let Some(c) = t.chunk_size {
            mock = mock.with_chunk_size(c);
        }
        mock
    }

    pub fn with_dialect(mut self, dialect: WireDialect) -> Self {
        self.model.dialect = dialect;
        self
    }

    pub fn with_model(mut self, model: ModelRef) -> Self {
        self.model = model;
        self
    }

    pub fn with_pricing(mut self, pricing: PricingTable) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size.max(1);
        self
    }

    pub fn with_seed(self, seed: u64) -> Self {
        *self.rng.lock().unwrap() = StdRng::seed_from_u64(seed);
        self
    }

    /// Keep replaying the final turn once the script runs out.
    pub fn repeating(mut self, repeat_last: bool) -> Self {
        self.repeat_last = repeat_last;
        self
    }

    /// Encoded request bodies, in call order.
    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn remaining(&self) -> usize {
        self.turns.lock().unwrap().len()
    }

    fn next_turn(&self, context: &Context, tools: &[ToolSpec], stream: bool) -> Result<ScriptedTurn, ProviderError> {
        let body = encode_request(context, tools, &self.model, stream)?;
        self.requests.lock().unwrap().push(body);
        let mut turns = self.turns.lock().unwrap();
        let mut last = self.last.lock().unwrap();
        let turn = match turns.pop_front() {
            Some(t) => t,
            None if self.repeat_last => last.clone().ok_or(ProviderError::ScriptExhausted)?,
            None => return Err(ProviderError::ScriptExhausted),
        };
        *last = Some(turn.clone());
        if let Some(e) = &turn.error {
            return Err(ProviderError::Transport(e.clone()));
        }
        Ok(turn)
    }

    /// Wire body for the blocking path.
    pub fn render_body(&self, turn: &ScriptedTurn) -> Value {
        let response = turn.response();
        match self.model.dialect {
            WireDialect::OpenAiChat => openai::response_body(&response, &self.model.model_name),
            WireDialect::AnthropicMessages => anthropic::response_body(&response, &self.model.model_name),
        }
    }

    /// SSE bytes for the streaming path.
    pub fn render_sse(&self, turn: &ScriptedTurn) -> String {
        let response = turn.response();
        let fragments = {
            let mut rng = self.rng.lock().unwrap();
            plan_fragments(&response, self.chunk_size, &mut *rng)
        };
        match self.model.dialect {
            WireDialect::OpenAiChat => openai::render_stream(&fragments, &response, &self.model.model_name),
            WireDialect::AnthropicMessages => anthropic::render_stream(&fragments, &response, &self.model.model_name),
        }
    }
}

impl Provider for MockProvider {
    fn model(&self) -> &ModelRef {
        &self.model
    }

    fn pricing(&self) -> &PricingTable {
        &self.pricing
    }

    fn complete(&self, context: &Context, tools: &[ToolSpec]) -> Result<Response, ProviderError> {
        let turn = self.next_turn(context, tools, false)?;
        let mut response = decode_response(&self.render_body(&turn), self.model.dialect)?;
        response.price(&self.model, &self.pricing);
        Ok(response)
    }

    fn stream(&self, context: &Context, tools: &[ToolSpec]) -> Result<EventStream, ProviderError> {
        let turn = self.next_turn(context, tools, true)?;
        let bytes = self.render_sse(&turn).into_bytes();
        Ok(Box::new(parse_stream(Cursor::new(bytes), self.model.dialect)))
    }
}
