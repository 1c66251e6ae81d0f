use std::io::BufReader;
use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{
    decode_response, encode_request, parse_stream, EventStream, ModelRef, PricingTable, Provider, ProviderError,
    Response, WireDialect,
};
use crate::model::Context;
use crate::tooling::ToolSpec;

/// Retries apply to transport failures and 5xx answers, never to 4xx.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            timeout: Duration::from_secs(120),
            backoff: vec![Duration::from_secs(1), Duration::from_secs(2)],
        }
    }
}

/// Blocking HTTP client for a real (or local OpenAI-compatible) endpoint.
pub struct HttpProvider {
    model: ModelRef,
    pricing: PricingTable,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpProvider {
    /// Reads the credential named by `model.api_key_env`.
    pub fn new(model: ModelRef, pricing: PricingTable) -> Result<Self, ProviderError> {
        let api_key = if model.api_key_env.is_empty() {
            None
        } else {
            let key = std::env::var(&model.api_key_env)
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| ProviderError::MissingCredential(model.api_key_env.clone()))?;
            Some(key)
        };
        Ok(Self::with_key(model, pricing, api_key))
    }

    pub fn with_key(model: ModelRef, pricing: PricingTable, api_key: Option<String>) -> Self {
        let retry = RetryPolicy::default();
        let agent = build_agent(&retry);
        HttpProvider {
            model,
            pricing,
            api_key,
            retry,
            agent,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.agent = build_agent(&retry);
        self.retry = retry;
        self
    }

    fn endpoint(&self) -> String {
        let base = self.model.base_url.as_str().trim_end_matches('/');
        match self.model.dialect {
            WireDialect::OpenAiChat => format!("{base}/chat/completions"),
            WireDialect::AnthropicMessages => format!("{base}/messages"),
        }
    }

    fn send(&self, body: &Value) -> Result<ureq::Response, ProviderError> {
        let url = self.endpoint();
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(&url).set("content-type", "application/json");
            match self.model.dialect {
                WireDialect::OpenAiChat => {
                    if let Some(key) = &self.api_key {
                        req = req.set("authorization", &format!("Bearer {key}"));
                    }
                }
                WireDialect::AnthropicMessages => {
                    req = req.set("anthropic-version", super::anthropic::API_VERSION);
                    if let Some(key) = &self.api_key {
                        req = req.set("x-api-key", key);
                    }
                }
            }
            let err = match req.send_json(body) {
                Ok(resp) => return Ok(resp),
                Err(ureq::Error::Status(status, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    let err = ProviderError::Http { status, body };
                    if status < 500 {
                        return Err(err);
                    }
                    err
                }
                Err(ureq::Error::Transport(t)) => ProviderError::Transport(t.to_string()),
            };
            match self.retry.backoff.get(attempt) {
                Some(delay) => {
                    log::warn!("{} request failed ({err}), retrying in {delay:?}", self.model.key());
                    thread::sleep(*delay);
                    attempt += 1;
                }
                None => return Err(err),
            }
        }
    }
}

fn build_agent(retry: &RetryPolicy) -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout_connect(retry.timeout)
        .timeout_read(retry.timeout)
        .build()
}

impl Provider for HttpProvider {
    fn model(&self) -> &ModelRef {
        &self.model
    }

    fn pricing(&self) -> &PricingTable {
        &self.pricing
    }

    fn complete(&self, context: &Context, tools: &[ToolSpec]) -> Result<Response, ProviderError> {
        let body = encode_request(context, tools, &self.model, false)?;
        let resp = self.send(&body)?;
        let json: Value = resp
            .into_json()
            .map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        let mut response = decode_response(&json, self.model.dialect)?;
        response.price(&self.model, &self.pricing);
        Ok(response)
    }

    fn stream(&self, context: &Context, tools: &[ToolSpec]) -> Result<EventStream, ProviderError> {
        let body = encode_request(context, tools, &self.model, true)?;
        let resp = self.send(&body)?;
        let reader = BufReader::new(resp.into_reader());
        Ok(Box::new(parse_stream(reader, self.model.dialect)))
    }
}
