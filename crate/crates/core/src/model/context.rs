use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{generate_tool_call_id, Message, ModelError, Role};

pub const SCHEMA_VERSION: u64 = 1;

/// Ordered, validated message history with aggregated cost and free-form
/// metadata (read-file registry, todo list, ...).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Context {
    messages: Vec<Message>,
    total_cost: f64,
    metadata: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    schema_version: u64,
    messages: Vec<Message>,
    total_cost: f64,
    #[serde(default)]
    metadata: Map<String, Value>,
}

impl Context {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn metadata(&self) -> &Map<String, Value> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut Map<String, Value> {
        &mut self.metadata
    }

    /// Appends a message after checking role/field consistency.
    pub fn add_message(&mut self, message: Message) -> Result<(), ModelError> {
        message.validate()?;
        self.total_cost += message.billed_cost();
        self.messages.push(message);
        Ok(())
    }

    /// Drops messages from `len` onwards.
    pub fn truncate(&mut self, len: usize) {
        self.messages.truncate(len);
        self.recompute_total_cost();
    }

    pub fn recompute_total_cost(&mut self) {
        self.total_cost = self.messages.iter().map(Message::billed_cost).sum();
    }

    /// Indices of tool results that have no matching call in the nearest
    /// preceding assistant message with tool calls, or that repeat an id
    /// already answered for that assistant message.
    pub fn orphaned_tool_results(&self) -> Vec<usize> {
        let mut orphans = Vec::new();
        let mut anchor: Option<usize> = None;
        let mut answered: HashSet<&str> = HashSet::new();
        for (i, m) in self.messages.iter().enumerate() {
            match m.role {
                Role::Assistant if !m.tool_calls.is_empty() => {
                    anchor = Some(i);
                    answered.clear();
                }
                Role::ToolResult => {
                    let id = m.tool_call_id.as_deref().unwrap_or("");
                    let matched = anchor.is_some_and(|a| self.messages[a].tool_calls.iter().any(|c| c.id == id));
                    if matched && answered.insert(id) {
                        continue;
                    }
                    orphans.push(i);
                }
                _ => {}
            }
        }
        orphans
    }

    /// Removes unmatched and duplicate tool results; returns how many were dropped.
    pub fn remove_orphaned_tool_results(&mut self) -> usize {
        let orphans = self.orphaned_tool_results();
        if orphans.is_empty() {
            return 0;
        }
        let drop: HashSet<usize> = orphans.iter().copied().collect();
        let mut i = 0;
        self.messages.retain(|_| {
            let keep = !drop.contains(&i);
            i += 1;
            keep
        });
        self.recompute_total_cost();
        orphans.len()
    }

    /// Gives every id-less tool call a fresh unique id. Tool results that
    /// follow the assistant message with an empty `tool_call_id` are linked
    /// to the id-less calls in order, by matching tool name.
    pub fn assign_missing_tool_call_ids(&mut self) {
        let mut used: HashSet<String> = self
            .messages
            .iter()
            .flat_map(|m| m.tool_calls.iter().map(|c| c.id.clone()))
            .filter(|id| !id.is_empty())
            .collect();

        let mut i = 0;
        while i < self.messages.len() {
            if self.messages[i].role != Role::Assistant {
                i += 1;
                continue;
            }
            // (new id, tool name, consumed)
            let mut fresh: Vec<(String, String, bool)> = Vec::new();
            for call in &mut self.messages[i].tool_calls {
                if call.id.is_empty() {
                    let id = loop {
                        let candidate = generate_tool_call_id();
                        if used.insert(candidate.clone()) {
                            break candidate;
                        }
                    };
                    call.id = id.clone();
                    fresh.push((id, call.name.clone(), false));
                }
            }
            let mut j = i + 1;
            while j < self.messages.len() && self.messages[j].role == Role::ToolResult {
                let result = &mut self.messages[j];
                if result.tool_call_id.as_deref() == Some("") {
                    let name = result.tool_name.clone();
                    let slot = fresh
                        .iter_mut()
                        .find(|(_, n, consumed)| !*consumed && name.as_deref().is_none_or(|t| t == n));
                    if let Some((id, _, consumed)) = slot {
                        *consumed = true;
                        result.tool_call_id = Some(id.clone());
                    }
                }
                j += 1;
            }
            i = j;
        }
    }

    /// Removes the last user message and everything after it.
    pub fn undo(&mut self) -> Result<(), ModelError> {
        let last_user = self
            .messages
            .iter()
            .rposition(|m| m.role == Role::User)
            .ok_or(ModelError::NothingToUndo)?;
        self.truncate(last_user);
        Ok(())
    }

    /// Independent deep copy for branching a conversation.
    pub fn fork(&self) -> Context {
        self.clone()
    }

    pub fn to_json(&self) -> Vec<u8> {
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            messages: self.messages.clone(),
            total_cost: self.total_cost,
            metadata: self.metadata.clone(),
        };
        serde_json::to_vec_pretty(&doc).expect("context serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Context, ModelError> {
        let raw: Value = serde_json::from_slice(bytes).map_err(|e| ModelError::MalformedDocument(e.to_string()))?;
        let version = raw
            .get("schema_version")
            .ok_or_else(|| ModelError::MalformedDocument("missing schema_version".into()))?
            .as_u64()
            .ok_or_else(|| ModelError::MalformedDocument("schema_version is not an integer".into()))?;
        if version != SCHEMA_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let doc: Document = serde_json::from_value(raw).map_err(|e| ModelError::MalformedDocument(e.to_string()))?;
        let mut ctx = Context {
            messages: Vec::with_capacity(doc.messages.len()),
            total_cost: 0.0,
            metadata: doc.metadata,
        };
        for (i, m) in doc.messages.into_iter().enumerate() {
            m.validate()
                .map_err(|e| ModelError::MalformedDocument(format!("message {i}: {e}")))?;
            ctx.messages.push(m);
        }
        ctx.recompute_total_cost();
        if (ctx.total_cost - doc.total_cost).abs() > 1e-9 {
            return Err(ModelError::MalformedDocument(format!(
                "total_cost {} does not match message usage sum {}",
                doc.total_cost, ctx.total_cost
            )));
        }
        // keep the stored value so save/load is exact
        ctx.total_cost = doc.total_cost;
        Ok(ctx)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Context, LoadError> {
        let bytes = std::fs::read(path)?;
        Ok(Context::from_json(&bytes)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}
