//! The universal conversation model.
//!
//! Every provider dialect is translated to and from these types, so a
//! conversation started against one provider can be saved, loaded and
//! continued against another.

mod context;
mod ids;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use context::{Context, LoadError, SCHEMA_VERSION};
pub use ids::generate_tool_call_id;

/// Meta key carrying cost incurred on behalf of a tool result (subagent runs).
pub const META_EXTRA_COST: &str = "subagent_cost";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("nothing to undo: the context holds no user message")]
    NothingToUndo,
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u64),
    #[error("malformed document: {0}")]
    MalformedDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    #[serde(rename = "tool")]
    ToolResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default)]
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: Map<String, Value>) -> Self {
        ToolCall {
            id: id.into(),
            name: name.into(),
            arguments,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// USD.
    #[serde(default)]
    pub cost: f64,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64, cost: f64) -> Self {
        Usage {
            input_tokens,
            output_tokens,
            cost,
        }
    }
}

/// One turn of a conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub meta: Map<String, Value>,
}

impl Message {
    fn bare(role: Role, text: impl Into<String>) -> Self {
        Message {
            role,
            text: text.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
            tool_name: None,
            usage: None,
            timestamp: Utc::now(),
            meta: Map::new(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::bare(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::bare(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::bare(Role::Assistant, text)
    }

    pub fn assistant_with_calls(text: impl Into<String>, calls: Vec<ToolCall>) -> Self {
        let mut m = Self::bare(Role::Assistant, text);
        m.tool_calls = calls;
        m
    }

    pub fn tool_result(call_id: impl Into<String>, tool_name: impl Into<String>, text: impl Into<String>) -> Self {
        let mut m = Self::bare(Role::ToolResult, text);
        m.tool_call_id = Some(call_id.into());
        m.tool_name = Some(tool_name.into());
        m
    }

    pub fn with_usage(mut self, usage: Usage) -> Self {
        self.usage = Some(usage);
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: Value) -> Self {
        self.meta.insert(key.into(), value);
        self
    }

    /// Cost attributed to this message: provider usage for assistant turns,
    /// plus any cost recorded against a tool result (e.g. a subagent run).
    pub fn billed_cost(&self) -> f64 {
        let usage = self.usage.map(|u| u.cost).unwrap_or(0.0);
        let extra = self.meta.get(META_EXTRA_COST).and_then(Value::as_f64).unwrap_or(0.0);
        usage + extra
    }

    /// Role/field consistency check.
    pub fn validate(&self) -> Result<(), ModelError> {
        let role = self.role;
        if !self.tool_calls.is_empty() && role != Role::Assistant {
            return Err(ModelError::InvalidMessage(format!("tool_calls on a {role:?} message")));
        }
        match (role, &self.tool_call_id) {
            (Role::ToolResult, None) => {
                return Err(ModelError::InvalidMessage("tool result without tool_call_id".into()))
            }
            (r, Some(_)) if r != Role::ToolResult => {
                return Err(ModelError::InvalidMessage(format!("tool_call_id on a {r:?} message")))
            }
            _ => {}
        }
        if self.tool_name.is_some() && role != Role::ToolResult {
            return Err(ModelError::InvalidMessage(format!("tool_name on a {role:?} message")));
        }
        if let Some(u) = &self.usage {
            if role != Role::Assistant {
                return Err(ModelError::InvalidMessage(format!("usage on a {role:?} message")));
            }
            if !(u.cost >= 0.0) || !u.cost.is_finite() {
                return Err(ModelError::InvalidMessage(format!(
                    "usage cost must be a finite non-negative number, got {}",
                    u.cost
                )));
            }
        }
        Ok(())
    }
}
