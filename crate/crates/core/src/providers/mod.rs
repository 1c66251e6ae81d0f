//! Provider abstraction: dialect codecs, streaming, cost and routing.
//!
//! Two wire dialects are implemented. Every other backend (local servers,
//! OpenAI-compatible gateways) reuses the OpenAI chat dialect with its own
//! base URL.

pub mod anthropic;
mod catalog;
mod http;
mod mock;
pub mod openai;
mod pricing;
mod routing;
mod sse;
mod stream;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;

use crate::model::{Context, Message, Role, Usage};
use crate::tooling::ToolSpec;

pub use catalog::{known_provider, KnownProvider, KNOWN_PROVIDERS};
pub use http::{HttpProvider, RetryPolicy};
pub use mock::{MockProvider, ScriptedTurn, Transcript};
pub use pricing::{compute_cost, ModelPrice, PricingError, PricingTable, DEFAULT_PRICING_JSON};
pub use routing::route_cheapest;
pub use sse::{SseFrame, SseReader};
pub use stream::{
    aggregate_stream, parse_stream, plan_fragments, Fragment, StreamAggregator, StreamEvent, StreamParser,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WireDialect {
    #[serde(rename = "openai")]
    OpenAiChat,
    #[serde(rename = "anthropic")]
    AnthropicMessages,
}

/// How streamed usage reports combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsageMode {
    /// Each report is a delta; values are summed.
    Increments,
    /// Each report is a running total; the last value wins.
    FinalSnapshot,
}

impl WireDialect {
    pub fn usage_mode(self) -> UsageMode {
        match self {
            WireDialect::OpenAiChat => UsageMode::FinalSnapshot,
            // the parser converts the cumulative counters into deltas
            WireDialect::AnthropicMessages => UsageMode::Increments,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WireDialect::OpenAiChat => "openai",
            WireDialect::AnthropicMessages => "anthropic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub provider_id: String,
    pub model_name: String,
    pub base_url: Url,
    /// Name of the environment variable holding the API key; empty when the
    /// endpoint needs no credential.
    pub api_key_env: String,
    pub dialect: WireDialect,
}

impl ModelRef {
    pub fn new(
        provider_id: impl Into<String>,
        model_name: impl Into<String>,
        base_url: &str,
        api_key_env: impl Into<String>,
        dialect: WireDialect,
    ) -> Result<Self, ProviderError> {
        let provider_id = provider_id.into();
        if provider_id.is_empty() {
            return Err(ProviderError::Config("provider id must not be empty".into()));
        }
        let base_url =
            Url::parse(base_url).map_err(|e| ProviderError::Config(format!("invalid base url {base_url:?}: {e}")))?;
        if base_url.cannot_be_a_base() {
            return Err(ProviderError::Config(format!("base url {base_url} is not absolute")));
        }
        Ok(ModelRef {
            provider_id,
            model_name: model_name.into(),
            base_url,
            api_key_env: api_key_env.into(),
            dialect,
        })
    }

    /// `"provider/model"` using the catalog defaults for that provider.
    pub fn parse(spec: &str) -> Result<Self, ProviderError> {
        let (provider, model) = spec
            .split_once('/')
            .ok_or_else(|| ProviderError::Config(format!("model must look like provider/name, got {spec:?}")))?;
        let known =
            known_provider(provider).ok_or_else(|| ProviderError::Config(format!("unknown provider {provider:?}")))?;
        ModelRef::new(provider, model, known.base_url, known.api_key_env, known.dialect)
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.provider_id, self.model_name)
    }

    pub fn with_base_url(mut self, base_url: &str) -> Result<Self, ProviderError> {
        self.base_url =
            Url::parse(base_url).map_err(|e| ProviderError::Config(format!("invalid base url {base_url:?}: {e}")))?;
        Ok(self)
    }

    pub fn credential_present(&self) -> bool {
        self.api_key_env.is_empty() || std::env::var(&self.api_key_env).is_ok_and(|v| !v.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EndTurn,
    ToolUse,
    MaxTokens,
    Other,
}

impl StopReason {
    /// Keeps `ToolUse` ⇔ "has tool calls", except that a length cut-off is
    /// reported as such even when calls are present.
    pub fn reconcile(self, has_calls: bool) -> StopReason {
        match (self, has_calls) {
            (StopReason::MaxTokens, _) => StopReason::MaxTokens,
            (_, true) => StopReason::ToolUse,
            (StopReason::ToolUse, false) => StopReason::EndTurn,
            (r, false) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    /// Assistant message; carries the same usage as `usage`.
    pub message: Message,
    pub usage: Usage,
    pub stop_reason: StopReason,
}

impl Response {
    pub(crate) fn assemble(
        text: String,
        calls: Vec<crate::model::ToolCall>,
        usage: Usage,
        stop: StopReason,
    ) -> Response {
        let stop_reason = stop.reconcile(!calls.is_empty());
        let message = Message::assistant_with_calls(text, calls).with_usage(usage);
        Response {
            message,
            usage,
            stop_reason,
        }
    }

    pub fn text(&self) -> &str {
        &self.message.text
    }

    /// Fills in the cost from `pricing`; unknown models cost 0 and are flagged
    /// in the message meta.
    pub fn price(&mut self, model: &ModelRef, pricing: &PricingTable) {
        match compute_cost(&self.usage, model, pricing) {
            Ok(cost) => self.usage.cost = cost,
            Err(e) => {
                self.usage.cost = 0.0;
                self.message
                    .meta
                    .insert("pricing_warning".into(), Value::String(e.to_string()));
            }
        }
        self.message.usage = Some(self.usage);
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ProviderError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("cannot encode message {index}: {reason}")]
    UnencodableMessage { index: usize, reason: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("tool arguments are not a JSON object: {0}")]
    ToolArgsNotJson(String),
    #[error("stream protocol error: {0}")]
    StreamProtocol(String),
    #[error("stream ended before its terminal marker")]
    TruncatedStream,
    #[error("event sequence has no Done marker")]
    MissingDone,
    #[error("scripted provider has no turns left")]
    ScriptExhausted,
    #[error("no configured provider has pricing and credentials")]
    NoProviderConfigured,
}

pub type EventStream = Box<dyn Iterator<Item = Result<StreamEvent, ProviderError>> + Send>;

/// A chat backend. Implementations are immutable after construction and can
/// be shared across threads.
pub trait Provider: Send + Sync {
    fn model(&self) -> &ModelRef;

    fn pricing(&self) -> &PricingTable;

    /// Blocking completion; the returned response is priced.
    fn complete(&self, context: &Context, tools: &[ToolSpec]) -> Result<Response, ProviderError>;

    /// Pull-based stream of normalized events ending in exactly one `Done`.
    fn stream(&self, context: &Context, tools: &[ToolSpec]) -> Result<EventStream, ProviderError>;
}

/// Dialect-specific request body for `context`.
pub fn encode_request(
    context: &Context,
    tools: &[ToolSpec],
    model: &ModelRef,
    stream: bool,
) -> Result<Value, ProviderError> {
    check_encodable(context)?;
    Ok(match model.dialect {
        WireDialect::OpenAiChat => openai::encode_request(context, tools, &model.model_name, stream),
        WireDialect::AnthropicMessages => anthropic::encode_request(context, tools, &model.model_name, stream),
    })
}

/// Parses a non-streaming response body. Costs are left at zero; see
/// [`Response::price`].
pub fn decode_response(body: &Value, dialect: WireDialect) -> Result<Response, ProviderError> {
    match dialect {
        WireDialect::OpenAiChat => openai::decode_response(body),
        WireDialect::AnthropicMessages => anthropic::decode_response(body),
    }
}

/// Provider-specific tool descriptor embedding the generated JSON Schema.
pub fn convert_tool_schema(spec: &ToolSpec, dialect: WireDialect) -> Value {
    match dialect {
        WireDialect::OpenAiChat => openai::tool_schema(spec),
        WireDialect::AnthropicMessages => anthropic::tool_schema(spec),
    }
}

fn check_encodable(context: &Context) -> Result<(), ProviderError> {
    if let Some(&index) = context.orphaned_tool_results().first() {
        return Err(ProviderError::UnencodableMessage {
            index,
            reason: "tool result does not answer a call of the preceding assistant turn".into(),
        });
    }
    for (index, m) in context.messages().iter().enumerate() {
        if m.role == Role::Assistant && m.tool_calls.iter().any(|c| c.id.is_empty()) {
            return Err(ProviderError::UnencodableMessage {
                index,
                reason: "tool call without id".into(),
            });
        }
    }
    Ok(())
}
