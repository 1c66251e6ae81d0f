use std::collections::HashSet;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
            ParamKind::Array => "array",
            ParamKind::Object => "object",
        }
    }

    /// Whether `value` is acceptable for this kind. Integers are accepted
    /// where numbers are expected, and whole-valued numbers count as integers.
    pub fn accepts(self, value: &Value) -> bool {
        match (self, value) {
            (ParamKind::String, Value::String(_)) => true,
            (ParamKind::Boolean, Value::Bool(_)) => true,
            (ParamKind::Number, Value::Number(_)) => true,
            (ParamKind::Integer, Value::Number(n)) => {
                n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0)
            }
            (ParamKind::Array, Value::Array(_)) => true,
            (ParamKind::Object, Value::Object(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Name used in error messages for the JSON type of `value`.
pub fn json_kind_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// One tool parameter. `runtime` params are supplied by the model and appear
/// in the generated schema; non-runtime params are internal state that
/// persists on the tool instance and is never shown to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_kind: Option<ParamKind>,
    #[serde(default)]
    pub description: String,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    pub runtime: bool,
}

impl ParamSpec {
    /// Required runtime parameter.
    pub fn required(name: impl Into<String>, kind: ParamKind) -> Self {
        ParamSpec {
            name: name.into(),
            kind,
            item_kind: None,
            description: String::new(),
            required: true,
            default: None,
            runtime: true,
        }
    }

    /// Optional runtime parameter; `default` fills it when omitted.
    pub fn optional(name: impl Into<String>, kind: ParamKind, default: Option<Value>) -> Self {
        ParamSpec {
            required: false,
            default,
            ..Self::required(name, kind)
        }
    }

    /// Internal state field, hidden from the model.
    pub fn state(name: impl Into<String>, kind: ParamKind, initial: Value) -> Self {
        ParamSpec {
            required: false,
            default: Some(initial),
            runtime: false,
            ..Self::required(name, kind)
        }
    }

    pub fn describe(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn items(mut self, kind: ParamKind) -> Self {
        self.item_kind = Some(kind);
        self
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("tool name {0:?} must match [a-zA-Z0-9_-]{{1,64}}")]
    BadName(String),
    #[error("tool {0} needs a description")]
    MissingDescription(String),
    #[error("duplicate parameter {0}")]
    DuplicateParam(String),
    #[error("parameter {0} is required but declares a default")]
    RequiredWithDefault(String),
    #[error("parameter {0}: item kind is only valid on arrays")]
    ItemKindOnScalar(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

fn tool_name_pattern() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-zA-Z0-9_-]{1,64}$").unwrap())
}

impl ToolSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        params: Vec<ParamSpec>,
    ) -> Result<Self, SpecError> {
        let spec = ToolSpec {
            name: name.into(),
            description: description.into(),
            params,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Builds a spec from a docstring of the form
    ///
    /// ```text
    /// Summary line.
    ///
    /// Args:
    ///     name: what it is
    /// Returns:
    ///     ...
    /// ```
    ///
    /// Param descriptions already set on `params` are kept.
    pub fn from_doc(name: impl Into<String>, doc: &str, mut params: Vec<ParamSpec>) -> Result<Self, SpecError> {
        let parsed = parse_doc(doc);
        for p in &mut params {
            if p.description.is_empty() {
                if let Some(d) = parsed.args.iter().find(|(n, _)| *n == p.name) {
                    p.description = d.1.clone();
                }
            }
        }
        Self::new(name, parsed.summary, params)
    }

    pub fn check(&self) -> Result<(), SpecError> {
        if !tool_name_pattern().is_match(&self.name) {
            return Err(SpecError::BadName(self.name.clone()));
        }
        if self.description.trim().is_empty() {
            return Err(SpecError::MissingDescription(self.name.clone()));
        }
        let mut seen = HashSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(SpecError::DuplicateParam(p.name.clone()));
            }
            if p.required && p.default.is_some() {
                return Err(SpecError::RequiredWithDefault(p.name.clone()));
            }
            if p.item_kind.is_some() && p.kind != ParamKind::Array {
                return Err(SpecError::ItemKindOnScalar(p.name.clone()));
            }
        }
        Ok(())
    }

    pub fn runtime_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| p.runtime)
    }

    pub fn state_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| !p.runtime)
    }

    /// Draft-07 object schema over the runtime params.
    pub fn json_schema(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for p in self.runtime_params() {
            let mut prop = Map::new();
            prop.insert("type".into(), json!(p.kind.as_str()));
            if let Some(item) = p.item_kind {
                prop.insert("items".into(), json!({ "type": item.as_str() }));
            }
            prop.insert("description".into(), json!(p.description));
            if let Some(d) = &p.default {
                prop.insert("default".into(), d.clone());
            }
            properties.insert(p.name.clone(), Value::Object(prop));
            if p.required {
                required.push(json!(p.name));
            }
        }
        json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false,
        })
    }
}

pub(crate) struct ParsedDoc {
    pub summary: String,
    pub args: Vec<(String, String)>,
}

pub(crate) fn parse_doc(doc: &str) -> ParsedDoc {
    #[derive(PartialEq)]
    enum Section {
        Summary,
        Args,
        Other,
    }
    let mut section = Section::Summary;
    let mut summary: Vec<&str> = Vec::new();
    let mut args: Vec<(String, String)> = Vec::new();
    let header = Regex::new(r"^([A-Za-z][A-Za-z ]*):\s*$").unwrap();
    let arg_line = Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\s*(?:\([^)]*\))?\s*:\s*(.*)$").unwrap();

    for raw in doc.lines() {
        let line = raw.trim();
        if let Some(cap) = header.captures(line) {
            section = match &cap[1] {
                "Args" | "Arguments" | "Parameters" => Section::Args,
                _ => Section::Other,
            };
            continue;
        }
        match section {
            Section::Summary => summary.push(line),
            Section::Args => {
                if line.is_empty() {
                    continue;
                }
                if let Some(cap) = arg_line.captures(line) {
                    args.push((cap[1].to_string(), cap[2].trim().to_string()));
                } else if let Some(last) = args.last_mut() {
                    if !last.1.is_empty() {
                        last.1.push(' ');
                    }
                    last.1.push_str(line);
                }
            }
            Section::Other => {}
        }
    }
    let summary = summary.join("\n").trim().to_string();
    ParsedDoc { summary, args }
}
