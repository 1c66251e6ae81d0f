use std::any::Any;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::spec::ToolSpec;
use super::validate::validate_args;
use crate::agent::InterruptFlag;
use crate::model::Context;

/// Structured tool failure, rendered for the model by [`ToolError::render`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolError {
    pub title: String,
    pub reason: String,
    #[serde(default)]
    pub context_lines: Vec<String>,
    #[serde(default)]
    pub guidance: String,
}

impl ToolError {
    pub fn new(title: impl Into<String>, reason: impl Into<String>) -> Self {
        ToolError {
            title: title.into(),
            reason: reason.into(),
            context_lines: Vec::new(),
            guidance: String::new(),
        }
    }

    /// Generic failure raised from inside a tool implementation.
    pub fn other(reason: impl fmt::Display) -> Self {
        Self::new("Tool Error", reason.to_string())
    }

    pub fn context(mut self, line: impl Into<String>) -> Self {
        self.context_lines.push(line.into());
        self
    }

    pub fn guidance(mut self, text: impl Into<String>) -> Self {
        self.guidance = text.into();
        self
    }

    /// Blank-line separated block:
    ///
    /// ```text
    /// Error: <title>
    ///
    /// Reason: <reason>
    ///
    /// Context: <first context line>
    ///
    /// <further context lines>
    ///
    /// <guidance>
    /// ```
    pub fn render(&self) -> String {
        let mut parts = vec![format!("Error: {}", self.title), format!("Reason: {}", self.reason)];
        let mut lines = self.context_lines.iter();
        if let Some(first) = lines.next() {
            parts.push(format!("Context: {first}"));
            parts.extend(lines.cloned());
        }
        if !self.guidance.is_empty() {
            parts.push(self.guidance.clone());
        }
        parts.join("\n\n")
    }
}

impl fmt::Display for ToolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.title, self.reason)
    }
}

impl std::error::Error for ToolError {}

pub fn format_error_block(error: &ToolError) -> String {
    error.render()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutcome {
    pub status: OutcomeStatus,
    pub content: String,
    pub error: Option<ToolError>,
}

impl ToolOutcome {
    pub fn success(content: impl Into<String>) -> Self {
        ToolOutcome {
            status: OutcomeStatus::Success,
            content: content.into(),
            error: None,
        }
    }

    pub fn failure(error: ToolError) -> Self {
        ToolOutcome {
            status: OutcomeStatus::Failure,
            content: error.render(),
            error: Some(error),
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == OutcomeStatus::Success
    }
}

/// What a tool sees of the running agent.
pub struct ToolContext<'a> {
    pub context: &'a mut Context,
    /// Nesting level of the agent invoking the tool (0 = top level).
    pub depth: usize,
    /// The invoking agent's interrupt flag, shared with nested agents.
    pub interrupt: Option<InterruptFlag>,
    charged: f64,
}

impl<'a> ToolContext<'a> {
    pub fn new(context: &'a mut Context, depth: usize) -> Self {
        ToolContext {
            context,
            depth,
            interrupt: None,
            charged: 0.0,
        }
    }

    pub fn with_interrupt(mut self, flag: InterruptFlag) -> Self {
        self.interrupt = Some(flag);
        self
    }

    /// Records cost spent on behalf of this call (e.g. by a subagent).
    pub fn charge(&mut self, usd: f64) {
        self.charged += usd;
    }

    pub fn charged(&self) -> f64 {
        self.charged
    }
}

pub trait Tool: Send {
    fn spec(&self) -> &ToolSpec;

    /// Runs with already validated arguments.
    fn run(&mut self, args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> Result<String, ToolError>;
}

/// Validates `args`, runs the tool and captures every failure, including
/// panics, into the returned outcome.
pub fn execute_tool(tool: &mut dyn Tool, args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> ToolOutcome {
    let normalized = match validate_args(tool.spec(), args) {
        Ok(a) => a,
        Err(e) => {
            return ToolOutcome::failure(
                ToolError::new("Invalid Arguments", e.to_string())
                    .context(format!("Tool: {}", tool.spec().name))
                    .guidance("Check the tool schema and call it again with corrected arguments"),
            )
        }
    };
    match catch_unwind(AssertUnwindSafe(|| tool.run(&normalized, cx))) {
        Ok(Ok(content)) => ToolOutcome::success(content),
        Ok(Err(e)) => ToolOutcome::failure(e),
        Err(panic) => ToolOutcome::failure(ToolError::other(panic_message(&panic))),
    }
}

pub(crate) fn panic_message(panic: &Box<dyn Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "tool panicked".to_string()
    }
}

type ToolFn = dyn FnMut(&Map<String, Value>, &mut Map<String, Value>) -> Result<Value, ToolError> + Send;

/// A tool built from a closure. The closure receives the validated runtime
/// arguments and the persistent state map (seeded from state params).
pub struct FunctionTool {
    spec: ToolSpec,
    state: Map<String, Value>,
    func: Box<ToolFn>,
}

impl FunctionTool {
    pub fn new<F>(spec: ToolSpec, func: F) -> Self
    where
        F: FnMut(&Map<String, Value>, &mut Map<String, Value>) -> Result<Value, ToolError> + Send + 'static,
    {
        let state = spec
            .state_params()
            .map(|p| (p.name.clone(), p.default.clone().unwrap_or(Value::Null)))
            .collect();
        FunctionTool {
            spec,
            state,
            func: Box::new(func),
        }
    }

    pub fn state(&self) -> &Map<String, Value> {
        &self.state
    }
}

impl Tool for FunctionTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, _cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let value = (self.func)(args, &mut self.state)?;
        Ok(match value {
            Value::String(s) => s,
            Value::Number(n) if n.is_f64() => format_float(n.as_f64().unwrap_or_default()),
            other => other.to_string(),
        })
    }
}

/// Shortest round-trip form; exponent notation outside [1e-4, 1e16).
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else if x.fract() == 0.0 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegistryError {
    #[error("a tool named {0} is already registered")]
    Duplicate(String),
}

#[derive(Default)]
pub struct ToolRegistry {
    tools: Vec<Box<dyn Tool>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tools(tools: Vec<Box<dyn Tool>>) -> Result<Self, RegistryError> {
        let mut reg = Self::new();
        for t in tools {
            reg.add(t)?;
        }
        Ok(reg)
    }

    pub fn add(&mut self, tool: Box<dyn Tool>) -> Result<(), RegistryError> {
        let name = &tool.spec().name;
        if self.tools.iter().any(|t| &t.spec().name == name) {
            return Err(RegistryError::Duplicate(name.clone()));
        }
        self.tools.push(tool);
        Ok(())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut (dyn Tool + 'static)> {
        self.tools
            .iter_mut()
            .find(|t| t.spec().name == name)
            .map(|t| t.as_mut())
    }

    pub fn specs(&self) -> Vec<ToolSpec> {
        self.tools.iter().map(|t| t.spec().clone()).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.spec().name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}
